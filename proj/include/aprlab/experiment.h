#pragma once

#include "aprlab/geo_solver.h"
#include "aprlab/report.h"
#include "aprlab/retrieval.h"
#include "aprlab/scenegen.h"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace aprlab {

enum class MethodKind { kApr, kRetrievalTop1, kRetrievalInterp, kPnp };

struct MethodSpec {
  MethodKind kind = MethodKind::kApr;
  int k = 1;  // neighbor count for retrieval-interp
};

/// Accepts `apr`, `retrieval-top1`, `retrieval-interp:k` and `pnp`.
MethodSpec parse_method(const std::string& text);
std::string to_string(const MethodSpec& method);

struct ExperimentConfig {
  // inputs and outputs
  std::filesystem::path scene;
  std::filesystem::path train;
  std::filesystem::path test;
  std::filesystem::path head;
  std::filesystem::path model;       // appearance model JSON
  std::filesystem::path embeddings;
  std::filesystem::path out;         // directory, or file for plot and table
  std::vector<std::filesystem::path> predictions;
  std::vector<std::string> labels;
  std::vector<std::filesystem::path> reports;
  std::string scenario;              // report column; defaults to the train (else test) directory

  // scene generation
  std::string preset = "line";       // line | parallel | loop | grid
  std::optional<double> offset;      // test trajectory offset, meters
  std::vector<double> spacings = {1.0, 0.5, 0.25};
  std::vector<double> max_distances = {1.0, 2.0, 3.0};
  int landmarks = 400;
  int test_count = 64;

  // methods
  std::string method = "apr";
  double ridge = 1e-3;
  bool conical = false;
  double tau = 1e-3;
  double subspace_tol = 1e-6;        // meters, for line and plane fits of bases
  std::string weight_stat = "mean-abs";  // mean-abs | signed | abs-norm
  RansacConfig ransac;
  RefineOptions refine;
  double pixel_noise = 0.0;
  double outlier_fraction = 0.0;
  bool training_visible = true;
  Intrinsics sensor{500.0, 500.0, 320.0, 240.0};
  DenseVladOptions retrieval;
  AppearanceModel appearance;

  std::optional<std::uint64_t> seed;
};

/// Keys mirror the field names; nested objects for `ransac`, `refine`,
/// `sensor`, `retrieval` and `appearance`. Unknown keys are rejected.
ExperimentConfig config_from_json(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config_file(const std::filesystem::path& path, ExperimentConfig base = {});
std::string config_to_json(const ExperimentConfig& config);

std::string appearance_to_json(const AppearanceModel& model);
AppearanceModel appearance_from_json(const std::string& text);
void save_appearance_file(const std::filesystem::path& path, const AppearanceModel& model);
AppearanceModel load_appearance_file(const std::filesystem::path& path);

/// Deterministic per-item seed derived from a base seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

struct Scenario {
  Scene scene;
  Trajectory train;
  Trajectory test;
};

/// Preset geometry: a landmark box in front of the cameras, which look at a
/// common target. `offset` moves the test trajectory away from training.
Scenario make_scenario(const std::string& preset, std::uint64_t seed, int landmarks,
                       int test_count, std::optional<double> offset);

/// Writes scene.txt, train.txt and test.txt to `out`. The grid preset adds
/// one directory per (spacing, max distance) pair holding train.txt with the
/// grid poses appended.
void cmd_scenegen(const ExperimentConfig& config);

/// Writes head.txt, train_embeddings.txt, model.json and fit_report.json.
void cmd_fit_apr(const ExperimentConfig& config);

/// Writes report.json, report.txt and predictions.txt.
EvalReport cmd_eval(const ExperimentConfig& config);

/// Writes analysis.json and bases.svg.
void cmd_analyze_bases(const ExperimentConfig& config);

/// Writes the SVG to `out`.
void cmd_plot(const ExperimentConfig& config);

/// Writes the table to `out` and returns it.
std::string cmd_table(const ExperimentConfig& config);

}  // namespace aprlab
