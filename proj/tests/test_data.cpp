#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "ana/errors.hpp"
#include "ana/scene.hpp"

using namespace ana;
namespace fs = std::filesystem;

namespace {

// x2^T E x1 with both points lifted to z = 1.
double algebraic_residual(const MatrixD& c, std::size_t i, const Mat3& e) {
  const double x1[3] = {c(i, 0), c(i, 1), 1.0};
  const double x2[3] = {c(i, 2), c(i, 3), 1.0};
  double r = 0.0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) r += x2[a] * e[3 * a + b] * x1[b];
  return r;
}

// Independent evaluation of the symmetric epipolar distance.
double sym_distance(const MatrixD& c, std::size_t i, const Mat3& e) {
  const double x1[3] = {c(i, 0), c(i, 1), 1.0};
  const double x2[3] = {c(i, 2), c(i, 3), 1.0};
  double ex1[3] = {0, 0, 0}, etx2[3] = {0, 0, 0};
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      ex1[a] += e[3 * a + b] * x1[b];
      etx2[b] += e[3 * a + b] * x2[a];
    }
  const double r = algebraic_residual(c, i, e);
  return r * r * (1.0 / (ex1[0] * ex1[0] + ex1[1] * ex1[1]) + 1.0 / (etx2[0] * etx2[0] + etx2[1] * etx2[1]));
}

Mat3 random_essential(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  // Rotation from a random unit quaternion.
  double q[4];
  double norm = 0.0;
  for (double& v : q) {
    v = g(rng);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (double& v : q) v /= norm;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  const Mat3 r{1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
               2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
               2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
  return essential_from_pose(r, {g(rng), g(rng), g(rng)});
}

std::size_t planted_inliers(const CorrespondenceSet& s) {
  std::size_t n = 0;
  for (int g : s.groups) n += g >= 0;
  return n;
}

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ana_test_data";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("floor rule for the inlier count") {
  CHECK(planted_inlier_count(2000, 0.95) == 100);
  CHECK(planted_inlier_count(10, 0.0) == 10);
  CHECK(planted_inlier_count(10, 0.99) == 0);
  CHECK(planted_inlier_count(3, 0.5) == 1);
  // 0.7 * 10 is 6.999... in binary; the guard keeps it at 7 inliers for 0.3.
  CHECK(planted_inlier_count(10, 0.3) == 7);

  SceneConfig cfg;
  cfg.n = 2000;
  cfg.outlier_ratio = 0.95;
  const auto scene = generate_scene(cfg);
  CHECK(scene.size() == 2000);
  CHECK(planted_inliers(scene) == 100);
}

TEST_CASE("outlier-free scene is all inliers") {
  SceneConfig cfg;
  cfg.n = 300;
  cfg.outlier_ratio = 0.0;
  cfg.noise_px = 0.0;
  cfg.seed = 4;
  const auto scene = generate_scene(cfg);
  CHECK(scene.labels == std::vector<int>(cfg.n, 1));
  CHECK(scene.inlier_ratio() == 1.0);

  // With pixel noise a few inliers can land past sigma, but on average they
  // stay well inside it.
  cfg.noise_px = 0.5;
  const auto noisy = generate_scene(cfg);
  double total = 0.0;
  std::size_t ones = 0;
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    total += sym_distance(noisy.coords, i, noisy.geometry[0]);
    ones += noisy.labels[i];
  }
  CHECK(total / noisy.size() < cfg.sigma);
  CHECK(static_cast<double>(ones) >= 0.99 * cfg.n);
}

TEST_CASE("planted inliers and outliers separate under the true geometry") {
  SceneConfig cfg;
  cfg.n = 2000;
  cfg.outlier_ratio = 0.6;
  cfg.seed = 11;
  const auto scene = generate_scene(cfg);
  REQUIRE(scene.geometry.size() == 1);
  const Mat3& e = scene.geometry[0];
  double fro = 0.0;
  for (double v : e) fro += v * v;
  CHECK(std::sqrt(fro) == doctest::Approx(1.0).epsilon(1e-12));

  std::size_t outliers = 0, far = 0, agree = 0, inliers_near = 0;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const double d = sym_distance(scene.coords, i, e);
    CHECK(symmetric_epipolar_distance(scene.coords.row(i), e).value == doctest::Approx(d).epsilon(1e-9));
    if (scene.groups[i] >= 0) {
      inliers_near += d < 1e-4;
    } else {
      ++outliers;
      far += d >= 1e-4;
    }
    agree += scene.labels[i] == (scene.groups[i] >= 0 ? 1 : 0);
  }
  CHECK(outliers == 1200);
  CHECK(static_cast<double>(inliers_near) >= 0.99 * 800);
  CHECK(static_cast<double>(far) >= 0.99 * outliers);
  CHECK(static_cast<double>(agree) >= 0.99 * scene.size());
  CHECK(relabel(scene) == scene.labels);
}

TEST_CASE("noiseless planted inliers lie on their epipolar lines") {
  SceneConfig cfg;
  cfg.n = 400;
  cfg.noise_px = 0.0;
  cfg.seed = 5;
  const auto scene = generate_scene(cfg);
  std::size_t outliers = 0, far = 0;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const double d = symmetric_epipolar_distance(scene.coords.row(i), scene.geometry[0]).value;
    if (scene.groups[i] >= 0) {
      CHECK(d < 1e-12);
      CHECK(scene.labels[i] == 1);
    } else {
      ++outliers;
      far += d >= 1e-4;
    }
  }
  CHECK(static_cast<double>(far) >= 0.99 * outliers);

  cfg.outlier_ratio = 0.0;
  const auto clean = generate_scene(cfg);
  CHECK(label(clean.coords, clean.geometry[0]) == std::vector<int>(cfg.n, 1));
}

TEST_CASE("a point on its epipolar line has zero distance") {
  std::mt19937_64 rng(6);
  const Mat3 e = random_essential(rng);
  // x2 on the line l = E x1: solve l0 x + l1 y + l2 = 0 for y at x = 0.3.
  const double x1[3] = {0.1, -0.2, 1.0};
  double l[3] = {0, 0, 0};
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) l[a] += e[3 * a + b] * x1[b];
  const double x = 0.3;
  const double y = -(l[0] * x + l[2]) / l[1];
  const double row[4] = {x1[0], x1[1], x, y};
  CHECK(symmetric_epipolar_distance(row, e).value <= 1e-28);
}

TEST_CASE("random pairs rarely satisfy a random epipolar constraint") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ux(-1.0, 1.0), uy(-0.75, 0.75);
  std::size_t above = 0;
  const std::size_t samples = 10000;
  for (std::size_t t = 0; t < samples; ++t) {
    const Mat3 e = random_essential(rng);
    const double row[4] = {ux(rng), uy(rng), ux(rng), uy(rng)};
    above += symmetric_epipolar_distance(row, e).value >= 1e-4;
  }
  MESSAGE(above << " of " << samples << " at or above sigma");
  CHECK(static_cast<double>(above) >= 0.99 * samples);
}

TEST_CASE("degenerate epipolar lines are flagged") {
  const Mat3 zero{};
  const double row[4] = {0.1, 0.2, 0.3, 0.4};
  const auto d = symmetric_epipolar_distance(row, zero);
  CHECK(d.degenerate);
  CHECK(std::isinf(d.value));
  MatrixD c(1, 4, 0.0);
  CHECK(label(c, zero) == std::vector<int>{0});
}

TEST_CASE("label boundary is strict") {
  std::mt19937_64 rng(8);
  const Mat3 e = random_essential(rng);
  const MatrixD c = MatrixD::from_rows({{0.1, 0.2, 0.3, -0.1}});
  const double d = symmetric_epipolar_distance(c.row(0), e).value;
  CHECK(label(c, e, d) == std::vector<int>{0});
  CHECK(label(c, e, std::nextafter(d, HUGE_VAL)) == std::vector<int>{1});
}

TEST_CASE("labeling takes the nearest of several models") {
  std::mt19937_64 rng(9);
  const Mat3 a = random_essential(rng);
  const Mat3 b = random_essential(rng);
  const MatrixD c = MatrixD::from_rows({{0.1, 0.2, 0.3, -0.1}});
  const double da = symmetric_epipolar_distance(c.row(0), a).value;
  const double db = symmetric_epipolar_distance(c.row(0), b).value;
  const Mat3 both[] = {a, b};
  const double sigma = std::nextafter(std::min(da, db), HUGE_VAL);
  CHECK(label(c, both, sigma) == std::vector<int>{1});
  CHECK(label(c, both, std::min(da, db)) == std::vector<int>{0});
  CHECK_THROWS_AS(label(c, std::span<const Mat3>{}, 1.0), ArgumentError);
}

TEST_CASE("single-motion mode matches generate_scene") {
  SceneConfig cfg;
  cfg.n = 128;
  cfg.seed = 12;
  CHECK(format_scene(generate_multi_motion(cfg)) == format_scene(generate_scene(cfg)));
}

TEST_CASE("two motions without outliers partition the rows") {
  SceneConfig cfg;
  cfg.n = 301;
  cfg.outlier_ratio = 0.0;
  cfg.motion_count = 2;
  cfg.seed = 13;
  const auto scene = generate_multi_motion(cfg);
  CHECK(scene.geometry.size() == 2);
  std::size_t counts[2] = {0, 0};
  for (std::size_t i = 0; i < scene.size(); ++i) {
    CHECK(scene.labels[i] == 1);
    REQUIRE((scene.groups[i] == 0 || scene.groups[i] == 1));
    ++counts[scene.groups[i]];
  }
  CHECK(counts[0] + counts[1] == 301);
  CHECK(counts[0] == 151);
  CHECK(counts[1] == 150);
}

TEST_CASE("three motions are each consistent with their own model only") {
  SceneConfig cfg;
  cfg.n = 600;
  cfg.outlier_ratio = 0.5;
  cfg.motion_count = 3;
  cfg.noise_px = 0.0;
  cfg.seed = 14;
  const auto scene = generate_multi_motion(cfg);
  REQUIRE(scene.geometry.size() == 3);
  std::size_t cross = 0, cross_far = 0;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const int g = scene.groups[i];
    if (g < 0) continue;
    CHECK(scene.labels[i] == 1);
    CHECK(std::abs(algebraic_residual(scene.coords, i, scene.geometry[g])) <= 1e-9);
    for (int other = 0; other < 3; ++other) {
      if (other == g) continue;
      ++cross;
      CHECK(std::abs(algebraic_residual(scene.coords, i, scene.geometry[other])) > 1e-9);
      cross_far += sym_distance(scene.coords, i, scene.geometry[other]) >= cfg.sigma;
    }
  }
  CHECK(cross == 600);
  CHECK(static_cast<double>(cross_far) >= 0.95 * cross);
}

TEST_CASE("shuffled outliers are real keypoints with wrong partners") {
  SceneConfig cfg;
  cfg.n = 400;
  cfg.outlier_mode = OutlierMode::shuffled;
  cfg.seed = 15;
  const auto scene = generate_scene(cfg);
  std::size_t outliers = 0, far = 0;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    if (scene.groups[i] >= 0) continue;
    ++outliers;
    far += sym_distance(scene.coords, i, scene.geometry[0]) >= cfg.sigma;
  }
  CHECK(outliers == 240);
  CHECK(static_cast<double>(far) >= 0.95 * outliers);
}

TEST_CASE("generation is deterministic in the seed") {
  SceneConfig cfg;
  cfg.n = 256;
  cfg.seed = 16;
  const auto a = generate_scene(cfg);
  const auto b = generate_scene(cfg);
  CHECK(a.coords == b.coords);
  CHECK(a.labels == b.labels);
  CHECK(a.groups == b.groups);
  CHECK(a.geometry == b.geometry);
  cfg.seed = 17;
  CHECK_FALSE(generate_scene(cfg).coords == a.coords);
}

TEST_CASE("scene configuration is validated") {
  SceneConfig cfg;
  cfg.n = 1;
  CHECK_THROWS_AS(generate_scene(cfg), ConfigError);
  cfg = SceneConfig{};
  cfg.outlier_ratio = 1.0;
  CHECK_THROWS_AS(generate_scene(cfg), ConfigError);
  cfg = SceneConfig{};
  cfg.sigma = 0.0;
  CHECK_THROWS_AS(generate_scene(cfg), ConfigError);
}

TEST_CASE("scene files round trip") {
  SceneConfig cfg;
  cfg.n = 50;
  cfg.motion_count = 2;
  cfg.outlier_ratio = 0.9;
  cfg.seed = 18;
  const auto scene = generate_multi_motion(cfg);
  const auto path = temp_file("roundtrip.scene");
  write_scene(scene, path);
  const auto back = read_scene(path);
  CHECK(back.coords == scene.coords);
  CHECK(back.labels == scene.labels);
  CHECK(back.groups == scene.groups);
  CHECK(back.geometry == scene.geometry);
  CHECK(back.outlier_ratio == scene.outlier_ratio);

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "ana-scene v1 n=50 ratio=0.9");
}

TEST_CASE("hand-written two-row file") {
  const auto s = parse_scene(
      "ana-scene v1 n=2 ratio=0.5\n"
      "0.25 -0.5 1e-3 7\n"
      "-1 0 0.125 3.5\n");
  REQUIRE(s.size() == 2);
  CHECK(s.coords == MatrixD::from_rows({{0.25, -0.5, 1e-3, 7}, {-1, 0, 0.125, 3.5}}));
  CHECK_FALSE(s.has_labels());
  CHECK_FALSE(s.has_geometry());
  CHECK(s.outlier_ratio == 0.5);
}

TEST_CASE("a file without geometry loads but cannot be relabeled") {
  const auto s = parse_scene(
      "ana-scene v1 n=2 ratio=0\n"
      "0.1 0.2 0.3 0.4 1\n"
      "0.5 0.6 0.7 0.8 0\n");
  CHECK(s.labels == std::vector<int>{1, 0});
  CHECK_FALSE(s.has_geometry());
  CHECK_THROWS_AS(relabel(s), ArgumentError);
  CHECK(s.inlier_ratio() == 0.5);
}

TEST_CASE("parse errors carry the line number") {
  auto line_of = [](const std::string& text) -> std::size_t {
    try {
      parse_scene(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  CHECK(line_of("") == 1);
  CHECK(line_of("not a scene\n") == 1);
  CHECK(line_of("ana-scene v1 n=2 ratio=0\n0 0 0 0\n0 0 zero 0\n") == 3);
  CHECK(line_of("ana-scene v1 n=2 ratio=0\n0 0 0 0 1\n0 0 0 0\n") == 3);
  CHECK(line_of("ana-scene v1 n=1 ratio=0\n0 0 0 0 2\n") == 2);
  CHECK(line_of("ana-scene v1 n=1 ratio=0\nE 1 2 3\n0 0 0 0\n") == 2);
  CHECK(line_of("ana-scene v1 n=1 ratio=0\n0 0 0 0\nE 1 0 0 0 1 0 0 0 1\n") == 3);
  CHECK(line_of("ana-scene v1 n=3 ratio=0\n0 0 0 0\n") > 0);
  CHECK_THROWS_AS(read_scene(temp_file("does_not_exist.scene")), std::exception);
}

TEST_CASE("scene directories list only scene files, sorted") {
  const fs::path dir = fs::temp_directory_path() / "ana_test_data_dir";
  fs::remove_all(dir);
  fs::create_directories(dir);
  for (const char* name : {"b.scene", "a.scene", "notes.txt"}) std::ofstream(dir / name) << "x";
  const auto files = list_scene_files(dir);
  REQUIRE(files.size() == 2);
  CHECK(files[0].filename() == "a.scene");
  CHECK(files[1].filename() == "b.scene");
}
