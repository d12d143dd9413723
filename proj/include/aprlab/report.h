#pragma once

#include "aprlab/pose.h"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace aprlab {

struct EvalRecord {
  std::string image_id;
  Posed truth;
  std::optional<Posed> estimate;  // empty when the method failed
  PoseError error;                 // zero when the method failed
};

struct EvalReport {
  std::string method;
  std::string scenario;
  std::vector<EvalRecord> records;
  std::optional<double> median_position;     // meters, over localized images
  std::optional<double> median_orientation;  // degrees
  double localization_rate = 0.0;
};

/// Computes errors, medians and the localization rate. Failed images are left
/// out of the medians.
EvalReport make_report(std::string method, std::string scenario,
                       std::vector<EvalRecord> records);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
void save_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport load_report(const std::filesystem::path& path);

/// Per-image listing followed by the summary line.
std::string report_table(const EvalReport& report);

/// Two decimals, "pos / rot".
std::string format_cell(double position, double orientation);

/// Rows are methods and columns are scenarios, both in order of first
/// appearance. Missing combinations stay blank.
std::string summary_table(std::span<const EvalReport> reports);

}  // namespace aprlab
