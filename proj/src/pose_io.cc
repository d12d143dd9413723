#include "aprlab/io.h"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace aprlab {

std::string format_number(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

namespace detail {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string() + " for reading");
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  return out;
}

double parse_number(const std::string& token) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (token.empty() || end != token.c_str() + token.size()) {
    throw Error("malformed number '" + token + "'");
  }
  return v;
}

bool next_data_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    return true;
  }
  return false;
}

}  // namespace detail

namespace {

std::vector<std::string> split(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

}  // namespace

std::vector<PoseRecord> read_pose_records(std::istream& in) {
  std::vector<PoseRecord> out;
  std::string line;
  while (detail::next_data_line(in, line)) {
    const auto tok = split(line);
    if (tok.size() != 8) throw Error("pose record needs 8 fields: '" + line + "'");
    Vector3d c;
    Vector4d q;
    for (int i = 0; i < 3; ++i) c[i] = detail::parse_number(tok[1 + i]);
    for (int i = 0; i < 4; ++i) q[i] = detail::parse_number(tok[4 + i]);
    out.push_back({tok[0], Posed(c, q)});
  }
  return out;
}

void write_pose_records(std::ostream& out, std::span<const PoseRecord> records,
                        const std::string& comment) {
  if (!comment.empty()) out << "# " << comment << '\n';
  for (const auto& r : records) {
    out << r.image_id;
    for (int i = 0; i < 3; ++i) out << ' ' << format_number(r.pose.position()[i]);
    for (int i = 0; i < 4; ++i) out << ' ' << format_number(r.pose.orientation()[i]);
    out << '\n';
  }
}

std::vector<PoseRecord> load_pose_file(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return read_pose_records(in);
}

void save_pose_file(const std::filesystem::path& path, std::span<const PoseRecord> records,
                    const std::string& comment) {
  auto out = detail::open_output(path);
  write_pose_records(out, records, comment);
}

PoseHeadd read_head(std::istream& in) {
  std::string line;
  if (!detail::next_data_line(in, line)) throw Error("head file: missing header");
  const auto header = split(line);
  if (header.size() != 4) throw Error("head file: header must be `n r split_k conical`");
  const long n = std::stol(header[0]);
  const long r = std::stol(header[1]);
  const long split_k = std::stol(header[2]);
  const long conical = std::stol(header[3]);
  if (n < 1) throw Error("head file: n must be positive");
  if (r != 4) throw Error("head file: only quaternion orientation (r = 4) is supported");

  auto read_vector = [&](const char* what) {
    if (!detail::next_data_line(in, line)) throw Error(std::string("head file: missing ") + what);
    const auto tok = split(line);
    if (tok.size() != 7) throw Error(std::string("head file: ") + what + " needs 7 values");
    Vector7d v;
    for (int i = 0; i < 7; ++i) v[i] = detail::parse_number(tok[static_cast<std::size_t>(i)]);
    return v;
  };
  const Vector7d bias = read_vector("bias");
  ProjectionMatrix<double> P(7, n);
  for (long j = 0; j < n; ++j) P.col(j) = read_vector("column");
  std::optional<Eigen::Index> split;
  if (split_k >= 0) split = split_k;
  return PoseHeadd(P, bias, conical != 0, split);
}

void write_head(std::ostream& out, const PoseHeadd& head) {
  out << head.dim() << " 4 " << (head.split_k() ? *head.split_k() : -1) << ' '
      << (head.conical() ? 1 : 0) << '\n';
  auto write_vector = [&](const auto& v) {
    for (int i = 0; i < 7; ++i) out << (i ? " " : "") << format_number(v[i]);
    out << '\n';
  };
  write_vector(head.bias());
  for (Eigen::Index j = 0; j < head.dim(); ++j) write_vector(head.projection().col(j));
}

PoseHeadd load_head_file(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return read_head(in);
}

void save_head_file(const std::filesystem::path& path, const PoseHeadd& head) {
  auto out = detail::open_output(path);
  write_head(out, head);
}

std::vector<EmbeddingRecord> read_embeddings(std::istream& in) {
  std::vector<EmbeddingRecord> out;
  std::string line;
  while (detail::next_data_line(in, line)) {
    const auto tok = split(line);
    if (tok.size() < 2) throw Error("embedding record needs an id and values");
    Embedding alpha(static_cast<Eigen::Index>(tok.size() - 1));
    for (std::size_t i = 1; i < tok.size(); ++i) {
      alpha[static_cast<Eigen::Index>(i - 1)] = detail::parse_number(tok[i]);
    }
    if (!out.empty() && out.front().alpha.size() != alpha.size()) {
      throw Error("embedding file: inconsistent dimensions");
    }
    out.push_back({tok[0], std::move(alpha)});
  }
  return out;
}

void write_embeddings(std::ostream& out, std::span<const EmbeddingRecord> records) {
  for (const auto& r : records) {
    out << r.image_id;
    for (Eigen::Index i = 0; i < r.alpha.size(); ++i) out << ' ' << format_number(r.alpha[i]);
    out << '\n';
  }
}

std::vector<EmbeddingRecord> load_embedding_file(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return read_embeddings(in);
}

void save_embedding_file(const std::filesystem::path& path,
                         std::span<const EmbeddingRecord> records) {
  auto out = detail::open_output(path);
  write_embeddings(out, records);
}

}  // namespace aprlab
