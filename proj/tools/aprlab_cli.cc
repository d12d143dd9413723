#include "aprlab/experiment.h"

#include <CLI11.hpp>

#include <cstring>
#include <iostream>
#include <string>

using namespace aprlab;

namespace {

// Flags parsed into plain values first; only the ones given on the command
// line override the config file.
struct Overrides {
  std::uint64_t seed = 0;
  double offset = 0;
  double fx = 0, fy = 0, cx = 0, cy = 0;
  bool all_landmarks = false;
  std::string config;
};

void add_common(CLI::App* sub, Overrides& ov, ExperimentConfig& cfg) {
  sub->add_option("--config", ov.config, "JSON config file; explicit flags take precedence");
  sub->add_option("--out", cfg.out, "Output directory (output file for plot and table)");
}

CLI::Option* add_seed(CLI::App* sub, Overrides& ov) {
  return sub->add_option("--seed", ov.seed, "Random seed");
}

void add_appearance(CLI::App* sub, AppearanceModel& m) {
  sub->add_option("--image-width", m.width, "Synthetic image width in pixels");
  sub->add_option("--image-height", m.height, "Synthetic image height in pixels");
  sub->add_option("--focal", m.focal, "Synthetic camera focal length in pixels");
  sub->add_option("--splat-radius", m.splat_radius, "Landmark blob radius at the reference depth");
  sub->add_option("--embedding-dim", m.embedding_dim, "Embedding dimension n");
  sub->add_option("--feature-rows", m.feature_rows, "Pooling grid rows");
  sub->add_option("--feature-cols", m.feature_cols, "Pooling grid columns");
}

// Loads --config before the real parse so flag defaults come from the file.
ExperimentConfig initial_config(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--config") == 0 && i + 1 < argc) return load_config_file(argv[i + 1]);
    if (std::strncmp(argv[i], "--config=", 9) == 0) return load_config_file(argv[i] + 9);
  }
  return {};
}

}  // namespace

int main(int argc, char** argv) {
  ExperimentConfig cfg;
  try {
    cfg = initial_config(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  Overrides ov;

  CLI::App app{"Synthetic camera relocalization laboratory"};
  app.require_subcommand(1);

  auto* scenegen = app.add_subcommand("scenegen", "Generate a scene with training and test trajectories");
  add_common(scenegen, ov, cfg);
  auto* scenegen_seed = add_seed(scenegen, ov);
  scenegen->add_option("--preset", cfg.preset, "line | parallel | loop | grid")
      ->check(CLI::IsMember({"line", "parallel", "loop", "grid"}));
  auto* offset_opt = scenegen->add_option("--offset", ov.offset, "Test trajectory offset in meters");
  scenegen->add_option("--spacing", cfg.spacings, "Grid spacings in meters (grid preset)");
  scenegen->add_option("--max-distance", cfg.max_distances, "Grid max distances in meters (grid preset)");
  scenegen->add_option("--landmarks", cfg.landmarks, "Landmark count");
  scenegen->add_option("--test-count", cfg.test_count, "Number of test poses");

  auto* fit = app.add_subcommand("fit-apr", "Fit a linear pose head on synthetic embeddings");
  add_common(fit, ov, cfg);
  auto* fit_seed = add_seed(fit, ov);
  fit->add_option("--scene", cfg.scene, "Scene file");
  fit->add_option("--train", cfg.train, "Training trajectory");
  fit->add_option("--ridge", cfg.ridge, "Ridge penalty on P");
  fit->add_flag("--conical", cfg.conical, "Mark the head as conical");
  fit->add_option("--subspace-tol", cfg.subspace_tol, "Inlier tolerance for base line fit");
  add_appearance(fit, cfg.appearance);

  auto* eval = app.add_subcommand("eval", "Evaluate one localization method on a test trajectory");
  add_common(eval, ov, cfg);
  auto* eval_seed = add_seed(eval, ov);
  eval->add_option("--method", cfg.method, "apr | retrieval-top1 | retrieval-interp:k | pnp");
  eval->add_option("--scene", cfg.scene, "Scene file");
  eval->add_option("--train", cfg.train, "Training trajectory");
  eval->add_option("--test", cfg.test, "Test trajectory");
  eval->add_option("--head", cfg.head, "Head file (apr)");
  eval->add_option("--model", cfg.model, "Appearance model JSON (default: next to the head)");
  eval->add_option("--scenario", cfg.scenario, "Scenario label for tables");
  eval->add_option("--ransac-threshold", cfg.ransac.inlier_threshold, "Inlier threshold in pixels");
  eval->add_option("--ransac-confidence", cfg.ransac.confidence, "RANSAC confidence");
  eval->add_option("--ransac-max-iterations", cfg.ransac.max_iterations, "RANSAC iteration cap");
  eval->add_option("--min-inliers", cfg.ransac.min_inliers, "Minimum inliers for success");
  eval->add_option("--refine-iterations", cfg.refine.max_iterations, "Refinement iteration cap");
  eval->add_option("--pixel-noise", cfg.pixel_noise, "Correspondence noise sigma in pixels");
  eval->add_option("--outlier-fraction", cfg.outlier_fraction, "Fraction of outlier matches");
  eval->add_flag("--all-landmarks", ov.all_landmarks, "Do not restrict to training-visible landmarks");
  auto* fx = eval->add_option("--fx", ov.fx, "Sensor focal length x");
  auto* fy = eval->add_option("--fy", ov.fy, "Sensor focal length y");
  auto* cx = eval->add_option("--cx", ov.cx, "Sensor principal point x");
  auto* cy = eval->add_option("--cy", ov.cy, "Sensor principal point y");
  eval->add_option("--patch", cfg.retrieval.patch, "Dense descriptor patch size");
  eval->add_option("--stride", cfg.retrieval.stride, "Dense descriptor stride");
  eval->add_option("--vocabulary-size", cfg.retrieval.vocabulary_size, "VLAD vocabulary size");
  eval->add_option("--pca-dim", cfg.retrieval.pca_dim, "PCA target dimension");
  eval->add_option("--kmeans-iterations", cfg.retrieval.kmeans_iterations, "Lloyd iteration cap");
  add_appearance(eval, cfg.appearance);

  auto* analyze = app.add_subcommand("analyze-bases", "Line and plane statistics of base translations");
  add_common(analyze, ov, cfg);
  analyze->add_option("--head", cfg.head, "Head file");
  analyze->add_option("--embeddings", cfg.embeddings, "Embedding file");
  analyze->add_option("--weight-stat", cfg.weight_stat, "mean-abs | signed | abs-norm")
      ->check(CLI::IsMember({"mean-abs", "signed", "abs-norm"}));
  analyze->add_option("--tau", cfg.tau, "Relative activation threshold");
  analyze->add_option("--subspace-tol", cfg.subspace_tol, "Inlier tolerance in meters");

  auto* plot = app.add_subcommand("plot", "SVG of trajectories and predictions");
  add_common(plot, ov, cfg);
  plot->add_option("--train", cfg.train, "Training trajectory");
  plot->add_option("--test", cfg.test, "Test trajectory");
  plot->add_option("--pred", cfg.predictions, "Prediction pose files, up to three");
  plot->add_option("--label", cfg.labels, "Legend label per prediction file");

  auto* table = app.add_subcommand("table", "Median error table over eval reports");
  add_common(table, ov, cfg);
  table->add_option("reports", cfg.reports, "report.json files");

  CLI11_PARSE(app, argc, argv);

  try {
    for (auto* opt : {scenegen_seed, fit_seed, eval_seed}) {
      if (opt->count() > 0) cfg.seed = ov.seed;
    }
    if (offset_opt->count() > 0) cfg.offset = ov.offset;
    if (ov.all_landmarks) cfg.training_visible = false;
    if (fx->count() + fy->count() + cx->count() + cy->count() > 0) {
      cfg.sensor = Intrinsics(fx->count() ? ov.fx : cfg.sensor.fx, fy->count() ? ov.fy : cfg.sensor.fy,
                              cx->count() ? ov.cx : cfg.sensor.cx, cy->count() ? ov.cy : cfg.sensor.cy);
    }

    if (*scenegen) {
      cmd_scenegen(cfg);
    } else if (*fit) {
      cmd_fit_apr(cfg);
    } else if (*eval) {
      std::cout << report_table(cmd_eval(cfg));
    } else if (*analyze) {
      cmd_analyze_bases(cfg);
    } else if (*plot) {
      cmd_plot(cfg);
    } else if (*table) {
      std::cout << cmd_table(cfg);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
