#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "ana/errors.hpp"
#include "ana/grad_check.hpp"
#include "ana/network.hpp"
#include "ana/random_maps.hpp"
#include "ana/train.hpp"
#include "ana/weights.hpp"

using namespace ana;
namespace fs = std::filesystem;

namespace {

NetConfig small_net(SocForm form = SocForm::linear) {
  NetConfig c;
  c.layers = 2;
  c.dim = 16;
  c.heads = 2;
  c.soc_form = form;
  return c;
}

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ana_test_network";
  fs::create_directories(dir);
  return dir / name;
}

bool params_equal(const ModelParams<float>& a, const ModelParams<float>& b) {
  std::vector<const Matrix<float>*> ma, mb;
  a.for_each([&](const std::string&, const Matrix<float>& m) { ma.push_back(&m); });
  b.for_each([&](const std::string&, const Matrix<float>& m) { mb.push_back(&m); });
  if (ma.size() != mb.size()) return false;
  for (std::size_t i = 0; i < ma.size(); ++i) {
    if (ma[i]->rows() != mb[i]->rows() || ma[i]->cols() != mb[i]->cols()) return false;
    // Bitwise, so that -0 and NaN payloads also count.
    if (std::memcmp(ma[i]->data(), mb[i]->data(), ma[i]->size() * sizeof(float)) != 0) return false;
  }
  return true;
}

double stable_bce(double o, int y) { return std::max(o, 0.0) - o * y + std::log1p(std::exp(-std::abs(o))); }

}  // namespace

TEST_CASE("normalize_input with a unit range is the identity") {
  CorrespondenceSet c;
  c.coords = MatrixD::from_rows({{-0.5, 0.25, 1.0, -1.0}, {0.0, 0.9, -0.3, 0.6}});
  const auto out = normalize_input(c, ImageRange{}, ImageRange{});
  CHECK(out.coords == c.coords);
}

TEST_CASE("normalize_input maps the image centre to the origin") {
  CorrespondenceSet c;
  c.coords = MatrixD::from_rows({{100, 50, 100, 50}, {0, 0, 200, 100}});
  const auto r = ImageRange::from_size(200, 100);
  const auto out = normalize_input(c, r, r);
  for (std::size_t k = 0; k < 4; ++k) CHECK(out.coords(0, k) == 0.0);
  CHECK(out.coords(1, 0) == -1.0);
  CHECK(out.coords(1, 1) == -1.0);
  CHECK(out.coords(1, 2) == 1.0);
  CHECK(out.coords(1, 3) == 1.0);
}

TEST_CASE("normalize_input without intrinsics uses the keypoint extent") {
  CorrespondenceSet c;
  c.coords = MatrixD::from_rows({{10, 20, 5, 7}, {30, 60, 15, 9}, {20, 40, 10, 8}});
  const auto out = normalize_input(c, std::nullopt);
  CHECK(out.coords(2, 0) == 0.0);
  CHECK(out.coords(0, 1) == -1.0);
  CHECK(out.coords(1, 3) == 1.0);
}

TEST_CASE("normalize_input rejects degenerate input") {
  CorrespondenceSet c;
  c.coords = MatrixD::from_rows({{1, 2, 3, 4}, {1, 5, 6, 7}});
  CHECK_THROWS_AS(normalize_input(c, std::nullopt), DegenerateInputError);
  CHECK_THROWS_AS(normalize_input(c, ImageRange{0, 0, 0, 1}, ImageRange{}), DegenerateInputError);
  c.coords(0, 0) = std::nan("");
  CHECK_THROWS_AS(normalize_input(c, ImageRange{}, ImageRange{}), DegenerateInputError);
}

TEST_CASE("normalize_input through intrinsics restores the epipolar constraint") {
  SceneConfig cfg;
  cfg.n = 200;
  cfg.outlier_ratio = 0.5;
  cfg.noise_px = 0.0;
  cfg.seed = 3;
  const auto scene = generate_scene(cfg);
  const Mat3 k = cfg.camera.intrinsics();
  // Back to pixels, then through K^-1 again.
  CorrespondenceSet pixels = scene;
  for (std::size_t i = 0; i < scene.size(); ++i)
    for (std::size_t v = 0; v < 2; ++v) {
      pixels.coords(i, 2 * v) = k[0] * scene.coords(i, 2 * v) + k[2];
      pixels.coords(i, 2 * v + 1) = k[4] * scene.coords(i, 2 * v + 1) + k[5];
    }
  const auto out = normalize_input(pixels, IntrinsicsPair{k, k});
  const Mat3& e = scene.geometry[0];
  std::size_t planted = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (scene.groups[i] != 0) continue;
    ++planted;
    const double x1[3] = {out.coords(i, 0), out.coords(i, 1), 1.0};
    const double x2[3] = {out.coords(i, 2), out.coords(i, 3), 1.0};
    double r = 0.0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) r += x2[a] * e[3 * a + b] * x1[b];
    CHECK(std::abs(r) <= 1e-9);
  }
  CHECK(planted == 100);
}

TEST_CASE("predict examples") {
  const auto w = predict(MatrixD::from_rows({{1.0}, {-1.0}, {0.0}}));
  CHECK(w[0] == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(w[1] == doctest::Approx(0.2689).epsilon(1e-4));
  CHECK(w[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-15));
  CHECK(w[2] == 0.5);

  const auto sat = predict(MatrixD::from_rows({{-1000.0}, {1000.0}, {-40.0}}));
  for (double v : sat) CHECK(std::isfinite(v));
  CHECK(sat[0] >= 0.0);
  CHECK(sat[0] < 1e-300);
  CHECK(sat[1] <= 1.0);
  CHECK(sat[2] > 0.0);

  const auto wf = predict(MatrixF::from_rows({{-200.0f}, {3.0f}}));
  CHECK(std::isfinite(wf[0]));
  CHECK(wf[1] < 1.0f);
}

TEST_CASE("inlier mask thresholds at one half") {
  const std::vector<double> w{0.5, 0.4999, 0.9, 0.0};
  CHECK(inlier_mask<double>(w) == std::vector<int>{1, 0, 1, 0});
}

TEST_CASE("weighted BCE examples") {
  const std::vector<int> balanced{1, 0, 1, 0};
  CHECK(weighted_bce_loss(MatrixD(4, 1, 0.0), balanced) == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  const MatrixD confident = MatrixD::from_rows({{20}, {-20}, {20}, {-20}});
  CHECK(weighted_bce_loss(confident, balanced) < 1e-8);

  LossInfo info;
  const double l = weighted_bce_loss(MatrixD::from_rows({{1.0}, {-1.0}}), std::vector<int>{1, 0}, LossBalance::balanced, &info);
  CHECK(l == doctest::Approx(std::log1p(std::exp(-1.0))).epsilon(1e-14));
  CHECK(l == doctest::Approx(0.3133).epsilon(1e-4));
  CHECK(info.positives == 1);
  CHECK(info.negatives == 1);
  CHECK_FALSE(info.single_class);
}

TEST_CASE("weighted BCE matches a direct weighted sum") {
  std::mt19937_64 rng(1);
  const MatrixD o = random_matrix<double>(9, 1, rng, 3.0);
  const std::vector<int> y{1, 0, 0, 0, 1, 0, 0, 0, 0};
  const double n = 9, pos = 2, neg = 7;
  double expect = 0.0;
  for (std::size_t i = 0; i < 9; ++i) expect += (y[i] ? n / (2 * pos) : n / (2 * neg)) * stable_bce(o(i, 0), y[i]);
  expect /= n;
  CHECK(weighted_bce_loss(o, y) == doctest::Approx(expect).epsilon(1e-13));

  double plain = 0.0;
  for (std::size_t i = 0; i < 9; ++i) plain += stable_bce(o(i, 0), y[i]);
  CHECK(weighted_bce_loss(o, y, LossBalance::none) == doctest::Approx(plain / n).epsilon(1e-13));
}

TEST_CASE("weighted BCE with one empty class") {
  LossInfo info;
  const MatrixD o = MatrixD::from_rows({{0.3}, {-2.0}, {1.0}});
  const double l = weighted_bce_loss(o, std::vector<int>{1, 1, 1}, LossBalance::balanced, &info);
  CHECK(info.single_class);
  CHECK(info.negatives == 0);
  // Positives carry weight N / (2 N_pos) = 1/2.
  double expect = 0.0;
  for (std::size_t i = 0; i < 3; ++i) expect += 0.5 * stable_bce(o(i, 0), 1);
  CHECK(l == doctest::Approx(expect / 3.0).epsilon(1e-13));
  CHECK(std::isfinite(weighted_bce_loss(o, std::vector<int>{0, 0, 0})));
}

TEST_CASE("weighted BCE checks lengths and labels") {
  CHECK_THROWS_AS(weighted_bce_loss(MatrixD(3, 1, 0.0), std::vector<int>{1, 0}), ShapeError);
  CHECK_THROWS(weighted_bce_loss(MatrixD(2, 1, 0.0), std::vector<int>{1, 2}));
  CHECK_THROWS(weighted_bce_loss(MatrixD(0, 1), std::vector<int>{}));
}

TEST_CASE("default architecture size") {
  const auto p = ModelParams<float>::init(NetConfig{}, 0);
  CHECK(p.blocks.size() == 5);
  CHECK(p.input_w.rows() == 4);
  CHECK(p.input_w.cols() == 128);
  CHECK(p.parameter_count() == 580614);
}

TEST_CASE("forward on a single correspondence") {
  const auto p = ModelParams<float>::init(small_net(), 1);
  const MatrixF logits = forward(MatrixF::from_rows({{0.1f, -0.2f, 0.3f, 0.05f}}), p);
  CHECK(logits.rows() == 1);
  CHECK(logits.cols() == 1);
  CHECK(std::isfinite(logits(0, 0)));
}

TEST_CASE("forward is deterministic") {
  const auto p = ModelParams<float>::init(NetConfig{}, 0);
  std::mt19937_64 rng(2);
  const MatrixF x = random_matrix<float>(64, 4, rng);
  const MatrixF a = forward(x, p);
  const MatrixF b = forward(x, p);
  CHECK(a == b);
}

TEST_CASE("forward is permutation equivariant") {
  std::mt19937_64 rng(3);
  for (const SocForm form : {SocForm::none, SocForm::cubic, SocForm::quadratic, SocForm::linear}) {
    CAPTURE(to_string(form));
    const auto p = ModelParams<float>::init(small_net(form), 4);
    const auto pd = p.cast<double>();
    for (int t = 0; t < 5; ++t) {
      const MatrixD x = random_matrix<double>(40, 4, rng);
      const auto perm = random_permutation(40, rng);
      const MatrixD xp = permute_rows(x, perm);
      CHECK(max_abs_diff(forward(xp.cast<float>(), p), permute_rows(forward(x.cast<float>(), p), perm)) <= 1e-4f);
      CHECK(max_abs_diff(forward(xp, pd), permute_rows(forward(x, pd), perm)) <= 1e-9);
    }
  }
}

TEST_CASE("trace captures every block") {
  const auto p = ModelParams<float>::init(small_net(), 5);
  std::mt19937_64 rng(5);
  ForwardTrace<float> trace;
  const MatrixF logits = forward(random_matrix<float>(12, 4, rng), p, &trace);
  REQUIRE(trace.blocks.size() == 2);
  CHECK(trace.input_features.cols() == 16);
  for (const auto& b : trace.blocks) {
    CHECK(b.output.rows() == 12);
    CHECK(b.context.cols() == 2);
  }
  CHECK(logits.rows() == 12);
}

TEST_CASE("loss gradient on one block, d = 16, N = 8") {
  std::mt19937_64 rng(6);
  NetConfig cfg;
  cfg.layers = 1;
  cfg.dim = 16;
  cfg.heads = 2;
  auto p = ModelParams<float>::init(cfg, 7).cast<double>();
  // Non-zero biases so that their gradients are exercised.
  std::normal_distribution<double> g(0.0, 0.2);
  p.for_each([&](const std::string& name, MatrixD& m) {
    if (name.find(".b") != std::string::npos || name.find("bias") != std::string::npos)
      for (double& v : m.values()) v = g(rng);
  });
  const MatrixD x = random_matrix<double>(8, 4, rng);
  const std::vector<int> y{1, 0, 0, 1, 0, 0, 0, 1};
  std::vector<MatrixD*> ptrs;
  p.for_each([&](const std::string&, MatrixD& m) { ptrs.push_back(&m); });
  const auto r = grad_check<double>(
      [&](Tape<double>& t) { return weighted_bce_loss(forward(t.constant(x), p), y); }, ptrs, 1e-5, 1e-6);
  CHECK(r.max_relative_error <= 1e-4);
}

TEST_CASE("zero learning rate leaves parameters bit-exact") {
  TrainConfig cfg;
  cfg.net = small_net();
  cfg.learning_rate = 0.0;
  cfg.steps = 3;
  SceneConfig scene;
  scene.n = 64;
  const auto init = ModelParams<float>::init(cfg.net, cfg.seed);
  const auto result = train(synthetic_scenes(scene), cfg);
  CHECK(result.losses.size() == 3);
  CHECK(params_equal(result.params, init));
}

TEST_CASE("training is reproducible from the seed") {
  TrainConfig cfg;
  cfg.net = small_net();
  cfg.steps = 10;
  cfg.seed = 9;
  SceneConfig scene;
  scene.n = 96;
  const auto a = train(synthetic_scenes(scene), cfg);
  const auto b = train(synthetic_scenes(scene), cfg);
  CHECK(a.losses == b.losses);
  CHECK(params_equal(a.params, b.params));
  cfg.seed = 10;
  CHECK_FALSE(params_equal(train(synthetic_scenes(scene), cfg).params, a.params));
}

TEST_CASE("training rejects bad configurations") {
  TrainConfig cfg;
  cfg.learning_rate = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.steps = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.net.dim = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  const auto mismatched = ModelParams<float>::init(small_net(), 0);
  CHECK_THROWS_AS(train(mismatched, synthetic_scenes(SceneConfig{}), cfg), ConfigError);
}

TEST_CASE("training aborts on a non-finite loss and names the step") {
  TrainConfig cfg;
  cfg.net = small_net();
  cfg.steps = 5;
  SceneConfig sc;
  sc.n = 32;
  const auto good = synthetic_scenes(sc);
  const SceneSource bad = [&](std::size_t step) {
    auto s = good(step);
    if (step == 2) s.coords(0, 0) = std::numeric_limits<double>::infinity();
    return s;
  };
  try {
    train(bad, cfg);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(e.step() == 2);
  }
}

TEST_CASE("200 steps at 60% outliers lower the loss") {
  TrainConfig cfg;
  cfg.steps = 200;
  cfg.seed = 0;
  SceneConfig scene;
  scene.n = 512;
  scene.outlier_ratio = 0.6;
  const auto r = train(synthetic_scenes(scene), cfg);
  const double first = std::accumulate(r.losses.begin(), r.losses.begin() + 50, 0.0) / 50.0;
  const double last = std::accumulate(r.losses.end() - 50, r.losses.end(), 0.0) / 50.0;
  MESSAGE("first 50 mean " << first << ", last 50 mean " << last);
  CHECK(last < first);
}

TEST_CASE("weights round trip bit-exactly") {
  for (const SocForm form : {SocForm::none, SocForm::cubic, SocForm::linear}) {
    auto cfg = small_net(form);
    cfg.value_mode = ValueMode::raw;
    const auto p = ModelParams<float>::init(cfg, 11);
    const auto path = temp_file("roundtrip.bin");
    save_weights(p, path);
    const auto q = load_weights(path);
    CHECK(q.config == cfg);
    CHECK(params_equal(p, q));
    CHECK(params_equal(p, load_weights(path, cfg)));
  }
}

TEST_CASE("weights errors carry distinct codes") {
  const auto p = ModelParams<float>::init(small_net(), 12);
  const auto path = temp_file("errors.bin");
  save_weights(p, path);

  auto code_of = [](const auto& fn) {
    try {
      fn();
    } catch (const WeightsError& e) {
      return static_cast<int>(e.code());
    }
    return -1;
  };

  const auto size = fs::file_size(path);
  const auto truncated = temp_file("truncated.bin");
  fs::copy_file(path, truncated, fs::copy_options::overwrite_existing);
  fs::resize_file(truncated, size - 7);
  CHECK(code_of([&] { load_weights(truncated); }) == static_cast<int>(WeightsError::Code::corrupt));

  const auto bad_magic = temp_file("magic.bin");
  fs::copy_file(path, bad_magic, fs::copy_options::overwrite_existing);
  {
    std::fstream f(bad_magic, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  CHECK(code_of([&] { load_weights(bad_magic); }) == static_cast<int>(WeightsError::Code::corrupt));

  const auto bad_version = temp_file("version.bin");
  fs::copy_file(path, bad_version, fs::copy_options::overwrite_existing);
  {
    std::fstream f(bad_version, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const char v[4] = {99, 0, 0, 0};
    f.write(v, 4);
  }
  CHECK(code_of([&] { load_weights(bad_version); }) == static_cast<int>(WeightsError::Code::version));

  CHECK(code_of([&] { load_weights(temp_file("missing.bin")); }) == static_cast<int>(WeightsError::Code::io));

  // A d = 64 file refused by a d = 128 configuration.
  NetConfig d64;
  d64.layers = 1;
  d64.dim = 64;
  const auto small = temp_file("d64.bin");
  save_weights(ModelParams<float>::init(d64, 0), small);
  NetConfig d128 = d64;
  d128.dim = 128;
  CHECK(code_of([&] { load_weights(small, d128); }) == static_cast<int>(WeightsError::Code::architecture));
}
