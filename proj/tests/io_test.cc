#include "aprlab/io.h"
#include "aprlab/scenegen.h"

#include "test_util.h"

#include <doctest.h>

#include <filesystem>
#include <random>
#include <sstream>

using namespace aprlab;
using aprlab::testing::random_pose;
using aprlab::testing::random_vectorx;

TEST_CASE("format_number round trips doubles") {
  std::mt19937_64 rng(40);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) / 3.0;
    CHECK(detail::parse_number(format_number(v)) == v);
  }
  CHECK(format_number(0.5) == "0.5");
  CHECK_THROWS_AS(detail::parse_number("1.0x"), Error);
  CHECK_THROWS_AS(detail::parse_number(""), Error);
}

TEST_CASE("pose records round trip bitwise") {
  std::mt19937_64 rng(41);
  std::vector<PoseRecord> records;
  for (int i = 0; i < 50; ++i) records.push_back({"img" + std::to_string(i), random_pose(rng, 7)});
  std::stringstream ss;
  write_pose_records(ss, records, "hello");
  CHECK(ss.str().rfind("# hello\n", 0) == 0);
  const auto back = read_pose_records(ss);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(back[i].image_id == records[i].image_id);
    CHECK(back[i].pose == records[i].pose);
  }
}

TEST_CASE("pose records skip comments and reject bad rows") {
  std::istringstream ok("# header\n\n a 1 2 3 1 0 0 0\n# mid\nb 0 0 0 0 0 0 -1\n");
  const auto r = read_pose_records(ok);
  REQUIRE(r.size() == 2);
  CHECK(r[0].pose.position() == Vector3d(1, 2, 3));
  CHECK(r[1].pose.orientation() == Vector4d(0, 0, 0, 1));
  std::istringstream short_row("a 1 2 3 1 0 0\n");
  CHECK_THROWS_AS(read_pose_records(short_row), Error);
  std::istringstream bad_number("a 1 2 x 1 0 0 0\n");
  CHECK_THROWS_AS(read_pose_records(bad_number), Error);
}

TEST_CASE("head round trip") {
  std::mt19937_64 rng(42);
  ProjectionMatrix<double> p(7, 9);
  for (int j = 0; j < 9; ++j) p.col(j) = random_vectorx(rng, 7);
  Vector7d b = random_vectorx(rng, 7);
  const PoseHeadd head(p, b, true);
  std::stringstream ss;
  write_head(ss, head);
  CHECK(read_head(ss) == head);

  ProjectionMatrix<double> split = p;
  split.bottomLeftCorner(4, 4).setZero();
  split.topRightCorner(3, 5).setZero();
  const PoseHeadd split_head(split, b, false, 4);
  std::stringstream s2;
  write_head(s2, split_head);
  const PoseHeadd back = read_head(s2);
  CHECK(back == split_head);
  CHECK(back.split_k() == std::optional<Eigen::Index>(4));

  std::istringstream bad_r("3 3 -1 0\n");
  CHECK_THROWS_AS(read_head(bad_r), Error);
  std::istringstream truncated("2 4 -1 0\n0 0 0 1 0 0 0\n1 0 0 0 0 0 0\n");
  CHECK_THROWS_AS(read_head(truncated), Error);
}

TEST_CASE("embedding round trip") {
  std::mt19937_64 rng(43);
  std::vector<EmbeddingRecord> recs;
  for (int i = 0; i < 10; ++i) recs.push_back({"e" + std::to_string(i), random_vectorx(rng, 12)});
  const auto dir = std::filesystem::temp_directory_path() / "aprlab_io_test";
  std::filesystem::create_directories(dir);
  save_embedding_file(dir / "emb.txt", recs);
  const auto back = load_embedding_file(dir / "emb.txt");
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].image_id == recs[i].image_id);
    CHECK(back[i].alpha == recs[i].alpha);
  }
  std::istringstream ragged("a 1 2 3\nb 1 2\n");
  CHECK_THROWS_WITH_AS(read_embeddings(ragged), "embedding file: inconsistent dimensions", Error);
  CHECK_THROWS_AS(load_embedding_file(dir / "missing.txt"), Error);
}

TEST_CASE("scene round trip") {
  const Scene scene = make_scene(Eigen::AlignedBox3d(Vector3d(-1, -2, 0), Vector3d(3, 4, 5)), 77, 9);
  std::stringstream ss;
  write_scene(ss, scene);
  const Scene back = read_scene(ss);
  CHECK(back.seed == 9);
  REQUIRE(back.landmarks.size() == 77);
  for (std::size_t i = 0; i < 77; ++i) {
    CHECK(back.landmarks[i].position == scene.landmarks[i].position);
    CHECK(back.landmarks[i].appearance == scene.landmarks[i].appearance);
  }
  std::istringstream truncated("3 1\n0 0 0 0.5\n");
  CHECK_THROWS_WITH_AS(read_scene(truncated), "scene file: truncated", Error);
}

TEST_CASE("trajectory file keeps its tag") {
  const auto dir = std::filesystem::temp_directory_path() / "aprlab_io_test";
  const Trajectory t = line_trajectory(Vector3d(0, 0, 1), Vector3d(1, 0, 0), 4, 0.5,
                                       LookAt{Vector3d(1, 5, 1)}, {"q", 0, TrajectoryTag::kTest});
  save_trajectory(dir / "traj.txt", t);
  const Trajectory back = load_trajectory(dir / "traj.txt");
  CHECK(back.tag == TrajectoryTag::kTest);
  REQUIRE(back.poses.size() == 4);
  CHECK(back.poses[3].pose == t.poses[3].pose);
}

TEST_CASE("correspondence round trip") {
  std::mt19937_64 rng(44);
  std::vector<CorrespondenceBlock> blocks(2);
  blocks[0].image_id = "a";
  blocks[0].intrinsics = Intrinsics(500.5, 499.25, 320, 240);
  for (int i = 0; i < 5; ++i) {
    blocks[0].matches.push_back({Vector2d(random_vectorx(rng, 2, 0, 600)), testing::random_vector(rng, 9)});
  }
  blocks[1].image_id = "b";
  blocks[1].intrinsics = Intrinsics(100, 100, 50, 50);
  std::stringstream ss;
  write_correspondences(ss, blocks);
  const auto back = read_correspondences(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].intrinsics.fy == 499.25);
  REQUIRE(back[0].matches.size() == 5);
  for (int i = 0; i < 5; ++i) {
    CHECK(back[0].matches[i].pixel == blocks[0].matches[i].pixel);
    CHECK(back[0].matches[i].point == blocks[0].matches[i].point);
  }
  CHECK(back[1].matches.empty());
  std::istringstream truncated("a 2 1 1 1 1\n0 0 1 2 3\n");
  CHECK_THROWS_AS(read_correspondences(truncated), Error);
}
