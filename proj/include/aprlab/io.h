#pragma once

#include "aprlab/apr_head.h"
#include "aprlab/pose.h"

#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace aprlab {

/// Decimal text with 17 significant digits; parses back to the same double.
std::string format_number(double value);

struct PoseRecord {
  std::string image_id;
  Posed pose;
};

/// One record per line: `image_id tx ty tz qw qx qy qz`. Lines starting with
/// '#' are comments.
std::vector<PoseRecord> read_pose_records(std::istream& in);
void write_pose_records(std::ostream& out, std::span<const PoseRecord> records,
                        const std::string& comment = {});

std::vector<PoseRecord> load_pose_file(const std::filesystem::path& path);
void save_pose_file(const std::filesystem::path& path, std::span<const PoseRecord> records,
                    const std::string& comment = {});

/// Header `n r split_k conical` (split_k = -1 when unset), the bias on one
/// line, then one line per column of P.
PoseHeadd read_head(std::istream& in);
void write_head(std::ostream& out, const PoseHeadd& head);
PoseHeadd load_head_file(const std::filesystem::path& path);
void save_head_file(const std::filesystem::path& path, const PoseHeadd& head);

struct EmbeddingRecord {
  std::string image_id;
  Embedding alpha;
};

/// `image_id` followed by n numbers per line.
std::vector<EmbeddingRecord> read_embeddings(std::istream& in);
void write_embeddings(std::ostream& out, std::span<const EmbeddingRecord> records);
std::vector<EmbeddingRecord> load_embedding_file(const std::filesystem::path& path);
void save_embedding_file(const std::filesystem::path& path,
                         std::span<const EmbeddingRecord> records);

namespace detail {
std::ifstream open_input(const std::filesystem::path& path);
std::ofstream open_output(const std::filesystem::path& path);
double parse_number(const std::string& token);
// Next line that is neither blank nor a comment.
bool next_data_line(std::istream& in, std::string& line);
}  // namespace detail

}  // namespace aprlab
