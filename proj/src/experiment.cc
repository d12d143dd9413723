#include "aprlab/experiment.h"

#include "aprlab/apr_head.h"
#include "aprlab/io.h"
#include "aprlab/subspace_fit.h"
#include "aprlab/svg.h"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <iterator>
#include <mutex>
#include <thread>

namespace aprlab {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Runs fn(i) for i in [0, n) on a few threads. Results must be written to
// per-index slots so the output order never depends on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::uint64_t require_seed(const ExperimentConfig& cfg, const char* command) {
  if (!cfg.seed) throw Error(std::string(command) + ": --seed is required");
  return *cfg.seed;
}

const fs::path& require_path(const fs::path& p, const char* what) {
  if (p.empty()) throw Error(std::string("missing --") + what);
  return p;
}

std::string read_text(const fs::path& path) {
  auto in = detail::open_input(path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = detail::open_output(path);
  out << text;
}

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

json vec_json(const Eigen::Ref<const VectorXd>& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

// --- config parsing -------------------------------------------------------

template <typename T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw Error("config: bad value for '" + key + "'");
  }
}

void apply_ransac(const json& j, RansacConfig& r) {
  for (const auto& [key, v] : j.items()) {
    if (key == "threshold") r.inlier_threshold = get_as<double>(v, key);
    else if (key == "confidence") r.confidence = get_as<double>(v, key);
    else if (key == "max_iterations") r.max_iterations = get_as<int>(v, key);
    else if (key == "min_inliers") r.min_inliers = get_as<int>(v, key);
    else throw Error("config: unknown key 'ransac." + key + "'");
  }
}

void apply_refine(const json& j, RefineOptions& r) {
  for (const auto& [key, v] : j.items()) {
    if (key == "max_iterations") r.max_iterations = get_as<int>(v, key);
    else if (key == "gradient_tolerance") r.gradient_tolerance = get_as<double>(v, key);
    else throw Error("config: unknown key 'refine." + key + "'");
  }
}

void apply_sensor(const json& j, Intrinsics& s) {
  double fx = s.fx, fy = s.fy, cx = s.cx, cy = s.cy;
  for (const auto& [key, v] : j.items()) {
    if (key == "fx") fx = get_as<double>(v, key);
    else if (key == "fy") fy = get_as<double>(v, key);
    else if (key == "cx") cx = get_as<double>(v, key);
    else if (key == "cy") cy = get_as<double>(v, key);
    else throw Error("config: unknown key 'sensor." + key + "'");
  }
  s = Intrinsics(fx, fy, cx, cy);
}

void apply_retrieval(const json& j, DenseVladOptions& r) {
  for (const auto& [key, v] : j.items()) {
    if (key == "patch") r.patch = get_as<int>(v, key);
    else if (key == "stride") r.stride = get_as<int>(v, key);
    else if (key == "vocabulary_size") r.vocabulary_size = get_as<int>(v, key);
    else if (key == "pca_dim") r.pca_dim = get_as<int>(v, key);
    else if (key == "kmeans_iterations") r.kmeans_iterations = get_as<int>(v, key);
    else throw Error("config: unknown key 'retrieval." + key + "'");
  }
}

void apply_appearance(const json& j, AppearanceModel& m) {
  for (const auto& [key, v] : j.items()) {
    if (key == "height") m.height = get_as<int>(v, key);
    else if (key == "width") m.width = get_as<int>(v, key);
    else if (key == "focal") m.focal = get_as<double>(v, key);
    else if (key == "splat_radius") m.splat_radius = get_as<double>(v, key);
    else if (key == "reference_depth") m.reference_depth = get_as<double>(v, key);
    else if (key == "falloff_depth") m.falloff_depth = get_as<double>(v, key);
    else if (key == "embedding_dim") m.embedding_dim = get_as<int>(v, key);
    else if (key == "embedding_seed") m.embedding_seed = get_as<std::uint64_t>(v, key);
    else if (key == "feature_rows") m.feature_rows = get_as<int>(v, key);
    else if (key == "feature_cols") m.feature_cols = get_as<int>(v, key);
    else if (key == "appearance_channels") m.appearance_channels = get_as<int>(v, key);
    else throw Error("config: unknown key 'appearance." + key + "'");
  }
}

json appearance_json(const AppearanceModel& m) {
  return {{"height", m.height},
          {"width", m.width},
          {"focal", m.focal},
          {"splat_radius", m.splat_radius},
          {"reference_depth", m.reference_depth},
          {"falloff_depth", m.falloff_depth},
          {"embedding_dim", m.embedding_dim},
          {"embedding_seed", m.embedding_seed},
          {"feature_rows", m.feature_rows},
          {"feature_cols", m.feature_cols},
          {"appearance_channels", m.appearance_channels}};
}

std::vector<fs::path> path_list(const json& v, const std::string& key) {
  std::vector<fs::path> out;
  for (const auto& s : get_as<std::vector<std::string>>(v, key)) out.emplace_back(s);
  return out;
}

std::string scenario_name(const ExperimentConfig& cfg) {
  if (!cfg.scenario.empty()) return cfg.scenario;
  const fs::path& ref = cfg.train.empty() ? cfg.test : cfg.train;
  const std::string name = fs::absolute(ref).parent_path().filename().string();
  return name.empty() ? "default" : name;
}

// --- scenarios ------------------------------------------------------------

const Eigen::AlignedBox3d kSceneBox(Vector3d(-6, 8, 0), Vector3d(16, 14, 6));
const Vector3d kLookTarget(5, 11, 2);
constexpr double kCameraHeight = 1.6;

Trajectory test_line(double offset, int count, const OrientationRule& rule) {
  if (count < 2) throw Error("scenario: test_count must be at least 2");
  return line_trajectory(Vector3d(0.25, offset, kCameraHeight), Vector3d::UnitX(), count,
                         9.6 / count, rule, {"test", 0, TrajectoryTag::kTest});
}

std::vector<bool> training_mask(const Scene& scene, const Trajectory& train,
                                const Intrinsics& intr) {
  const auto poses = train.pose_list();
  return visible_landmarks(scene, poses, intr);
}

}  // namespace

MethodSpec parse_method(const std::string& text) {
  if (text == "apr") return {MethodKind::kApr, 1};
  if (text == "retrieval-top1") return {MethodKind::kRetrievalTop1, 1};
  if (text == "pnp") return {MethodKind::kPnp, 1};
  const std::string prefix = "retrieval-interp:";
  if (text.rfind(prefix, 0) == 0) {
    const std::string k = text.substr(prefix.size());
    char* end = nullptr;
    const long v = std::strtol(k.c_str(), &end, 10);
    if (!k.empty() && end && *end == '\0' && v >= 1 && v <= 100000) {
      return {MethodKind::kRetrievalInterp, static_cast<int>(v)};
    }
  }
  throw Error("unknown method '" + text + "'");
}

std::string to_string(const MethodSpec& method) {
  switch (method.kind) {
    case MethodKind::kApr: return "apr";
    case MethodKind::kRetrievalTop1: return "retrieval-top1";
    case MethodKind::kRetrievalInterp: return "retrieval-interp:" + std::to_string(method.k);
    case MethodKind::kPnp: return "pnp";
  }
  return "apr";
}

ExperimentConfig config_from_json(const std::string& text, ExperimentConfig cfg) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  if (!doc.is_object()) throw Error("config: expected a JSON object");
  for (const auto& [key, v] : doc.items()) {
    if (key == "scene") cfg.scene = get_as<std::string>(v, key);
    else if (key == "train") cfg.train = get_as<std::string>(v, key);
    else if (key == "test") cfg.test = get_as<std::string>(v, key);
    else if (key == "head") cfg.head = get_as<std::string>(v, key);
    else if (key == "model") cfg.model = get_as<std::string>(v, key);
    else if (key == "embeddings") cfg.embeddings = get_as<std::string>(v, key);
    else if (key == "out") cfg.out = get_as<std::string>(v, key);
    else if (key == "predictions") cfg.predictions = path_list(v, key);
    else if (key == "labels") cfg.labels = get_as<std::vector<std::string>>(v, key);
    else if (key == "reports") cfg.reports = path_list(v, key);
    else if (key == "scenario") cfg.scenario = get_as<std::string>(v, key);
    else if (key == "preset") cfg.preset = get_as<std::string>(v, key);
    else if (key == "offset") cfg.offset = get_as<double>(v, key);
    else if (key == "spacings") cfg.spacings = get_as<std::vector<double>>(v, key);
    else if (key == "max_distances") cfg.max_distances = get_as<std::vector<double>>(v, key);
    else if (key == "landmarks") cfg.landmarks = get_as<int>(v, key);
    else if (key == "test_count") cfg.test_count = get_as<int>(v, key);
    else if (key == "method") cfg.method = get_as<std::string>(v, key);
    else if (key == "ridge") cfg.ridge = get_as<double>(v, key);
    else if (key == "conical") cfg.conical = get_as<bool>(v, key);
    else if (key == "tau") cfg.tau = get_as<double>(v, key);
    else if (key == "subspace_tol") cfg.subspace_tol = get_as<double>(v, key);
    else if (key == "weight_stat") cfg.weight_stat = get_as<std::string>(v, key);
    else if (key == "pixel_noise") cfg.pixel_noise = get_as<double>(v, key);
    else if (key == "outlier_fraction") cfg.outlier_fraction = get_as<double>(v, key);
    else if (key == "training_visible") cfg.training_visible = get_as<bool>(v, key);
    else if (key == "seed") cfg.seed = get_as<std::uint64_t>(v, key);
    else if (key == "ransac") apply_ransac(v, cfg.ransac);
    else if (key == "refine") apply_refine(v, cfg.refine);
    else if (key == "sensor") apply_sensor(v, cfg.sensor);
    else if (key == "retrieval") apply_retrieval(v, cfg.retrieval);
    else if (key == "appearance") apply_appearance(v, cfg.appearance);
    else throw Error("config: unknown key '" + key + "'");
  }
  return cfg;
}

ExperimentConfig load_config_file(const fs::path& path, ExperimentConfig base) {
  return config_from_json(read_text(path), std::move(base));
}

std::string config_to_json(const ExperimentConfig& cfg) {
  const auto paths = [](const std::vector<fs::path>& ps) {
    json out = json::array();
    for (const auto& p : ps) out.push_back(p.string());
    return out;
  };
  json doc = {
      {"scene", cfg.scene.string()},
      {"train", cfg.train.string()},
      {"test", cfg.test.string()},
      {"head", cfg.head.string()},
      {"model", cfg.model.string()},
      {"embeddings", cfg.embeddings.string()},
      {"out", cfg.out.string()},
      {"predictions", paths(cfg.predictions)},
      {"labels", cfg.labels},
      {"reports", paths(cfg.reports)},
      {"scenario", cfg.scenario},
      {"preset", cfg.preset},
      {"spacings", cfg.spacings},
      {"max_distances", cfg.max_distances},
      {"landmarks", cfg.landmarks},
      {"test_count", cfg.test_count},
      {"method", cfg.method},
      {"ridge", cfg.ridge},
      {"conical", cfg.conical},
      {"tau", cfg.tau},
      {"subspace_tol", cfg.subspace_tol},
      {"weight_stat", cfg.weight_stat},
      {"pixel_noise", cfg.pixel_noise},
      {"outlier_fraction", cfg.outlier_fraction},
      {"training_visible", cfg.training_visible},
      {"ransac",
       {{"threshold", cfg.ransac.inlier_threshold},
        {"confidence", cfg.ransac.confidence},
        {"max_iterations", cfg.ransac.max_iterations},
        {"min_inliers", cfg.ransac.min_inliers}}},
      {"refine",
       {{"max_iterations", cfg.refine.max_iterations},
        {"gradient_tolerance", cfg.refine.gradient_tolerance}}},
      {"sensor", {{"fx", cfg.sensor.fx}, {"fy", cfg.sensor.fy}, {"cx", cfg.sensor.cx}, {"cy", cfg.sensor.cy}}},
      {"retrieval",
       {{"patch", cfg.retrieval.patch},
        {"stride", cfg.retrieval.stride},
        {"vocabulary_size", cfg.retrieval.vocabulary_size},
        {"pca_dim", cfg.retrieval.pca_dim},
        {"kmeans_iterations", cfg.retrieval.kmeans_iterations}}},
      {"appearance", appearance_json(cfg.appearance)}};
  if (cfg.offset) doc["offset"] = *cfg.offset;
  if (cfg.seed) doc["seed"] = *cfg.seed;
  return doc.dump(2) + "\n";
}

std::string appearance_to_json(const AppearanceModel& model) {
  return appearance_json(model).dump(2) + "\n";
}

AppearanceModel appearance_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("appearance model: ") + e.what());
  }
  AppearanceModel m;
  apply_appearance(doc, m);
  m.validate();
  return m;
}

void save_appearance_file(const fs::path& path, const AppearanceModel& model) {
  write_text(path, appearance_to_json(model));
}

AppearanceModel load_appearance_file(const fs::path& path) {
  return appearance_from_json(read_text(path));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Scenario make_scenario(const std::string& preset, std::uint64_t seed, int landmarks,
                       int test_count, std::optional<double> offset) {
  Scenario s;
  s.scene = make_scene(kSceneBox, landmarks, seed);
  const OrientationRule rule = LookAt{kLookTarget};
  const TrajectoryNaming train_naming{"train", 0, TrajectoryTag::kTraining};
  if (preset == "line" || preset == "grid") {
    s.train = line_trajectory(Vector3d(0, 0, kCameraHeight), Vector3d::UnitX(), 21, 0.5, rule,
                              train_naming);
    s.test = test_line(offset.value_or(preset == "line" ? 3.0 : 1.3), test_count, rule);
  } else if (preset == "parallel") {
    s.train = parallel_lines_trajectory(Vector3d(0, 0, kCameraHeight), Vector3d::UnitX(), 3, 1.0,
                                        21, 0.5, rule, train_naming);
    s.test = test_line(offset.value_or(0.5), test_count, rule);
  } else if (preset == "loop") {
    const Vector3d center(5, 3, kCameraHeight);
    const Vector2d radii(5.0, 2.5);
    const double shrink = offset.value_or(1.0);
    if (!(shrink >= 0 && shrink < radii.minCoeff())) {
      throw Error("scenario: loop offset must be in [0, 2.5)");
    }
    s.train = planar_loop_trajectory(center, radii, 60, rule, train_naming);
    s.test = planar_loop_trajectory(center, radii - Vector2d::Constant(shrink),
                                    std::max(test_count, 3), rule,
                                    {"test", 0, TrajectoryTag::kTest});
  } else {
    throw Error("unknown preset '" + preset + "'");
  }
  return s;
}

void cmd_scenegen(const ExperimentConfig& cfg) {
  const std::uint64_t seed = require_seed(cfg, "scenegen");
  const fs::path& out = require_path(cfg.out, "out");
  const Scenario s = make_scenario(cfg.preset, seed, cfg.landmarks, cfg.test_count, cfg.offset);
  save_scene_file(out / "scene.txt", s.scene);
  save_trajectory(out / "train.txt", s.train);
  save_trajectory(out / "test.txt", s.test);
  if (cfg.preset != "grid") return;
  if (cfg.spacings.empty() || cfg.max_distances.empty()) {
    throw Error("scenegen: grid preset needs spacings and max distances");
  }
  for (const double spacing : cfg.spacings) {
    for (const double max_distance : cfg.max_distances) {
      Trajectory train = s.train;
      const Trajectory grid = grid_augment(s.train, spacing, max_distance, "grid");
      train.poses.insert(train.poses.end(), grid.poses.begin(), grid.poses.end());
      const fs::path dir = out / ("s" + short_number(spacing) + "_m" + short_number(max_distance));
      save_trajectory(dir / "train.txt", train);
    }
  }
}

void cmd_fit_apr(const ExperimentConfig& cfg) {
  const std::uint64_t seed = require_seed(cfg, "fit-apr");
  const fs::path& out = require_path(cfg.out, "out");
  const Scene scene = load_scene_file(require_path(cfg.scene, "scene"));
  const Trajectory train = load_trajectory(require_path(cfg.train, "train"));
  AppearanceModel model = cfg.appearance;
  model.embedding_seed = seed;
  model.validate();

  const std::vector<Posed> poses = train.pose_list();
  std::vector<Embedding> embeddings(poses.size());
  parallel_for(poses.size(), [&](std::size_t i) {
    embeddings[i] = render_embedding(scene, model, poses[i]);
  });
  const HeadFit<double> fit =
      fit_head<double>(embeddings, poses, HeadFitOptions{cfg.ridge, cfg.conical});

  std::vector<EmbeddingRecord> records;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    records.push_back({train.poses[i].image_id, embeddings[i]});
  }
  save_head_file(out / "head.txt", fit.head);
  save_embedding_file(out / "train_embeddings.txt", records);
  save_appearance_file(out / "model.json", model);

  std::vector<PoseError> errors;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    try {
      errors.push_back(pose_error(fit.head.predict(embeddings[i]), poses[i]));
    } catch (const Error&) {
    }
  }
  json report = {{"samples", poses.size()},
                 {"embedding_dim", model.embedding_dim},
                 {"ridge", cfg.ridge},
                 {"conical", cfg.conical},
                 {"residual_max", fit.residuals.maxCoeff()},
                 {"residual_mean", fit.residuals.mean()},
                 {"predicted", errors.size()}};
  if (!errors.empty()) {
    const auto [pos, rot] = median_errors(errors);
    report["train_median_position"] = pos;
    report["train_median_orientation"] = rot;
  }
  std::vector<Vector3d> translations;
  for (const auto& b : base_poses(fit.head)) translations.push_back(b.translation);
  try {
    const auto line = fit_line<double>(translations, cfg.subspace_tol);
    report["base_line_inlier_fraction"] = line.inlier_fraction;
    report["base_line_rms"] = line.rms_residual;
  } catch (const Error&) {
    report["base_line_inlier_fraction"] = nullptr;
  }
  write_text(out / "fit_report.json", report.dump(2) + "\n");
}

EvalReport cmd_eval(const ExperimentConfig& cfg) {
  const MethodSpec method = parse_method(cfg.method);
  const fs::path& out = require_path(cfg.out, "out");
  const Trajectory test = load_trajectory(require_path(cfg.test, "test"));
  const std::size_t n = test.poses.size();
  std::vector<EvalRecord> records(n);
  for (std::size_t i = 0; i < n; ++i) {
    records[i].image_id = test.poses[i].image_id;
    records[i].truth = test.poses[i].pose;
  }
  const auto attempt = [&](std::size_t i, auto&& estimate) {
    try {
      records[i].estimate = estimate();
    } catch (const Error&) {
      records[i].estimate.reset();
    }
  };

  if (method.kind == MethodKind::kApr) {
    const fs::path& head_path = require_path(cfg.head, "head");
    const PoseHeadd head = load_head_file(head_path);
    const fs::path model_path = cfg.model.empty() ? head_path.parent_path() / "model.json" : cfg.model;
    const AppearanceModel model = load_appearance_file(model_path);
    const Scene scene = load_scene_file(require_path(cfg.scene, "scene"));
    parallel_for(n, [&](std::size_t i) {
      attempt(i, [&] { return head.predict(render_embedding(scene, model, records[i].truth)); });
    });
  } else if (method.kind == MethodKind::kPnp) {
    const std::uint64_t seed = require_seed(cfg, "eval");
    const Scene scene = load_scene_file(require_path(cfg.scene, "scene"));
    CorrespondenceOptions base;
    base.pixel_noise_sigma = cfg.pixel_noise;
    base.outlier_fraction = cfg.outlier_fraction;
    if (cfg.training_visible) {
      base.allowed_landmarks =
          training_mask(scene, load_trajectory(require_path(cfg.train, "train")), cfg.sensor);
    }
    std::vector<CorrespondenceBlock> blocks(n);
    parallel_for(n, [&](std::size_t i) {
      CorrespondenceOptions opt = base;
      opt.seed = derive_seed(seed, 2 * i);
      const CorrespondenceSet set = make_correspondences(scene, records[i].truth, cfg.sensor, opt);
      blocks[i] = {records[i].image_id, cfg.sensor, set.matches};
      attempt(i, [&] {
        RansacConfig rc = cfg.ransac;
        rc.seed = derive_seed(seed, 2 * i + 1);
        const RansacResult r = ransac_pnp(set.matches, cfg.sensor, rc);
        std::vector<Correspondence> inliers;
        for (const auto idx : r.inliers) inliers.push_back(set.matches[idx]);
        if (inliers.size() < 4) return r.pose;
        return refine_pose(r.pose, inliers, cfg.sensor, cfg.refine).pose;
      });
    });
    auto stream = detail::open_output(out / "correspondences.txt");
    write_correspondences(stream, blocks);
  } else {
    const std::uint64_t seed = require_seed(cfg, "eval");
    const Scene scene = load_scene_file(require_path(cfg.scene, "scene"));
    const Trajectory train = load_trajectory(require_path(cfg.train, "train"));
    const AppearanceModel model = cfg.model.empty() ? cfg.appearance : load_appearance_file(cfg.model);
    model.validate();
    const Intrinsics intr = model.intrinsics();
    const std::vector<Posed> train_poses = train.pose_list();
    std::vector<MatrixXd> images(train_poses.size());
    parallel_for(images.size(), [&](std::size_t i) {
      images[i] = render_image(scene, model, train_poses[i], intr);
    });
    DenseVladOptions options = cfg.retrieval;
    options.seed = seed;
    const DenseVlad vlad = DenseVlad::train(images, options);
    std::vector<VectorXd> descriptors(images.size());
    parallel_for(images.size(), [&](std::size_t i) { descriptors[i] = vlad.describe(images[i]); });
    DescriptorDatabase db({}, vlad.pca());
    for (std::size_t i = 0; i < images.size(); ++i) {
      db.add({train.poses[i].image_id, descriptors[i], train_poses[i]});
    }
    parallel_for(n, [&](std::size_t i) {
      attempt(i, [&] {
        const VectorXd d = vlad.describe(render_image(scene, model, records[i].truth, intr));
        return method.kind == MethodKind::kRetrievalTop1 ? top1_pose(db, d)
                                                         : interpolated_pose(db, d, method.k);
      });
    });
    auto db_out = detail::open_output(out / "database.txt");
    write_descriptor_database(db_out, db);
    auto vocab_out = detail::open_output(out / "vocabulary.txt");
    write_vocabulary(vocab_out, vlad.vocabulary());
  }

  const EvalReport report = make_report(to_string(method), scenario_name(cfg), std::move(records));
  save_report(out / "report.json", report);
  write_text(out / "report.txt", report_table(report));
  std::vector<PoseRecord> predictions;
  for (const auto& rec : report.records) {
    if (rec.estimate) predictions.push_back({rec.image_id, *rec.estimate});
  }
  save_pose_file(out / "predictions.txt", predictions, "predictions " + report.method);
  return report;
}

void cmd_analyze_bases(const ExperimentConfig& cfg) {
  const fs::path& out = require_path(cfg.out, "out");
  const PoseHeadd head = load_head_file(require_path(cfg.head, "head"));
  const auto records = load_embedding_file(require_path(cfg.embeddings, "embeddings"));
  if (records.empty()) throw Error("analyze-bases: no embeddings");
  if (cfg.weight_stat != "mean-abs" && cfg.weight_stat != "signed" && cfg.weight_stat != "abs-norm") {
    throw Error("analyze-bases: weight statistic must be mean-abs, signed or abs-norm");
  }
  std::vector<Embedding> alphas;
  for (const auto& r : records) {
    head.check_embedding(r.alpha);
    alphas.push_back(r.alpha);
  }
  const auto bases = base_poses(head);
  const Eigen::Index n = head.dim();
  const auto split = head.split_k();

  VectorXd mean_abs = VectorXd::Zero(n), mean_signed = VectorXd::Zero(n);
  for (const auto& a : alphas) {
    mean_abs += a.cwiseAbs();
    mean_signed += a;
  }
  mean_abs /= static_cast<double>(alphas.size());
  mean_signed /= static_cast<double>(alphas.size());

  std::vector<Vector3d> positional;
  std::vector<WeightedBase> plotted;
  json per_base = json::array();
  for (Eigen::Index j = 0; j < n; ++j) {
    const bool orientation_only = split && j >= *split;
    const Vector3d c = bases[static_cast<std::size_t>(j)].translation;
    const double abs_norm = mean_abs[j] * c.norm();
    if (!orientation_only) positional.push_back(c);
    const double w = cfg.weight_stat == "mean-abs" ? mean_abs[j]
                     : cfg.weight_stat == "signed" ? mean_signed[j]
                                                   : abs_norm;
    plotted.push_back({c, w, orientation_only});
    per_base.push_back({{"index", j},
                        {"population", orientation_only ? "orientation" : "position"},
                        {"translation", vec_json(c)},
                        {"translation_norm", c.norm()},
                        {"mean_abs", mean_abs[j]},
                        {"mean", mean_signed[j]},
                        {"mean_abs_norm", abs_norm}});
  }

  json per_image = json::array();
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    const VectorXd& a = alphas[i];
    const double peak = a.cwiseAbs().maxCoeff();
    Eigen::Index dominant = 0;
    double best = -1;
    int active = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (std::abs(a[j]) > cfg.tau * peak && std::abs(a[j]) > 0) ++active;
      const double contribution =
          std::abs(a[j]) * head.projection().col(j).norm();
      if (contribution > best) {
        best = contribution;
        dominant = j;
      }
    }
    per_image.push_back({{"image_id", records[i].image_id},
                         {"l1", a.lpNorm<1>()},
                         {"active", active},
                         {"dominant_base", dominant}});
  }

  const auto fit_or_null = [&](auto&& fn) -> json {
    if (positional.size() < 2) return nullptr;
    try {
      return fn();
    } catch (const Error&) {
      return nullptr;
    }
  };
  const json line = fit_or_null([&] {
    const auto f = fit_line<double>(positional, cfg.subspace_tol);
    return json{{"anchor", vec_json(f.anchor)},
                {"direction", vec_json(f.direction)},
                {"rms_residual", f.rms_residual},
                {"inlier_fraction", f.inlier_fraction}};
  });
  const json plane = fit_or_null([&] {
    const auto f = fit_plane<double>(positional, cfg.subspace_tol);
    return json{{"anchor", vec_json(f.anchor)},
                {"normal", vec_json(f.normal)},
                {"rms_residual", f.rms_residual},
                {"inlier_fraction", f.inlier_fraction}};
  });
  const auto relevant = relevant_bases<double>(head, alphas, cfg.tau);

  json doc = {{"bases", n},
              {"split_k", split ? json(*split) : json(nullptr)},
              {"conical", head.conical()},
              {"bias", vec_json(head.bias())},
              {"position_bases", positional.size()},
              {"orientation_bases", static_cast<std::size_t>(n) - positional.size()},
              {"tolerance", cfg.subspace_tol},
              {"line_fit", line},
              {"plane_fit", plane},
              {"tau", cfg.tau},
              {"relevant_bases", relevant},
              {"weight_statistic", cfg.weight_stat},
              {"images", alphas.size()},
              {"per_base", per_base},
              {"per_image", per_image}};
  write_text(out / "analysis.json", doc.dump(2) + "\n");
  write_text(out / "bases.svg", plot_bases(plotted, "base translations, weight " + cfg.weight_stat));
}

void cmd_plot(const ExperimentConfig& cfg) {
  const fs::path& out = require_path(cfg.out, "out");
  if (cfg.predictions.size() > 3) throw Error("plot: at most three prediction files");
  if (!cfg.labels.empty() && cfg.labels.size() != cfg.predictions.size()) {
    throw Error("plot: one label per prediction file");
  }
  const auto to_points = [](const std::vector<PoseRecord>& recs, std::string label) {
    PointSet s{std::move(label), {}};
    for (const auto& r : recs) s.points.push_back(r.pose.position());
    return s;
  };
  const PointSet train = to_points(load_pose_file(require_path(cfg.train, "train")), "training");
  const PointSet test = to_points(load_pose_file(require_path(cfg.test, "test")), "test");
  std::vector<PointSet> predictions;
  for (std::size_t i = 0; i < cfg.predictions.size(); ++i) {
    predictions.push_back(to_points(load_pose_file(cfg.predictions[i]),
                                    cfg.labels.empty() ? cfg.predictions[i].stem().string()
                                                       : cfg.labels[i]));
  }
  write_text(out, plot_trajectories(train, test, predictions));
}

std::string cmd_table(const ExperimentConfig& cfg) {
  if (cfg.reports.empty()) throw Error("table: at least one report is required");
  std::vector<EvalReport> reports;
  for (const auto& p : cfg.reports) reports.push_back(load_report(p));
  const std::string table = summary_table(reports);
  if (!cfg.out.empty()) write_text(cfg.out, table);
  return table;
}

}  // namespace aprlab
