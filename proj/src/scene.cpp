#include "ana/scene.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace ana {
namespace {

using Eigen::Matrix3d;
using Eigen::Vector3d;

Matrix3d to_eigen(const Mat3& m) {
  Matrix3d out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out(r, c) = m[static_cast<std::size_t>(r * 3 + c)];
  return out;
}

Mat3 from_eigen(const Matrix3d& m) {
  Mat3 out{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out[static_cast<std::size_t>(r * 3 + c)] = m(r, c);
  return out;
}

struct Motion {
  Matrix3d rotation;
  Vector3d translation;
  Mat3 essential;
};

Vector3d random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vector3d v;
  do {
    v = Vector3d(g(rng), g(rng), g(rng));
  } while (v.norm() < 1e-9);
  return v.normalized();
}

Motion sample_motion(const SceneConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> angle(0.0, cfg.max_rotation);
  const Vector3d axis = random_unit(rng);
  const double theta = angle(rng);
  Motion m;
  m.rotation = Eigen::AngleAxisd(theta, axis).toRotationMatrix();
  m.translation = random_unit(rng) * cfg.baseline;
  m.essential = essential_from_pose(from_eigen(m.rotation),
                                    {m.translation.x(), m.translation.y(), m.translation.z()});
  return m;
}

struct PixelPair {
  double u1, v1, u2, v2;
};

bool inside(const Camera& cam, double u, double v) {
  return u >= 0.0 && u <= cam.width && v >= 0.0 && v <= cam.height;
}

/// Projects a random visible 3D point into both views; noise is added in
/// pixels and the noisy observation must stay inside both images.
PixelPair sample_inlier(const SceneConfig& cfg, const Motion& m, double noise_px,
                        std::mt19937_64& rng) {
  const Camera& cam = cfg.camera;
  std::uniform_real_distribution<double> ux(0.0, cam.width);
  std::uniform_real_distribution<double> uy(0.0, cam.height);
  std::uniform_real_distribution<double> depth(cfg.min_depth, cfg.max_depth);
  std::normal_distribution<double> noise(0.0, noise_px > 0.0 ? noise_px : 1.0);
  for (int attempt = 0; attempt < 100000; ++attempt) {
    const double u1 = ux(rng);
    const double v1 = uy(rng);
    const double z = depth(rng);
    const Vector3d x1((u1 - cam.cx) / cam.focal * z, (v1 - cam.cy) / cam.focal * z, z);
    const Vector3d x2 = m.rotation * x1 + m.translation;
    if (x2.z() <= 1e-6) continue;
    double u2 = cam.focal * x2.x() / x2.z() + cam.cx;
    double v2 = cam.focal * x2.y() / x2.z() + cam.cy;
    if (!inside(cam, u2, v2)) continue;
    PixelPair p{u1, v1, u2, v2};
    if (noise_px > 0.0) {
      p.u1 += noise(rng);
      p.v1 += noise(rng);
      p.u2 += noise(rng);
      p.v2 += noise(rng);
      if (!inside(cam, p.u1, p.v1) || !inside(cam, p.u2, p.v2)) continue;
    }
    return p;
  }
  throw ConfigError("scene generator: could not place a point visible in both views");
}

std::array<double, 4> normalize_pair(const Camera& cam, const PixelPair& p) {
  return {(p.u1 - cam.cx) / cam.focal, (p.v1 - cam.cy) / cam.focal, (p.u2 - cam.cx) / cam.focal,
          (p.v2 - cam.cy) / cam.focal};
}

CorrespondenceSet generate(const SceneConfig& cfg, std::size_t motions) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::vector<Motion> poses;
  for (std::size_t m = 0; m < motions; ++m) poses.push_back(sample_motion(cfg, rng));

  const std::size_t n_in = planted_inlier_count(cfg.n, cfg.outlier_ratio);
  const std::size_t n_out = cfg.n - n_in;

  std::vector<std::array<double, 4>> rows;
  std::vector<int> groups;
  rows.reserve(cfg.n);
  for (std::size_t m = 0; m < motions; ++m) {
    const std::size_t count = n_in / motions + (m < n_in % motions ? 1 : 0);
    for (std::size_t i = 0; i < count; ++i) {
      rows.push_back(normalize_pair(cfg.camera, sample_inlier(cfg, poses[m], cfg.noise_px, rng)));
      groups.push_back(static_cast<int>(m));
    }
  }

  const Camera& cam = cfg.camera;
  if (cfg.outlier_mode == OutlierMode::shuffled && n_out >= 2) {
    std::vector<PixelPair> points;
    for (std::size_t i = 0; i < n_out; ++i) points.push_back(sample_inlier(cfg, poses[0], cfg.noise_px, rng));
    // Cyclic shift pairs every first-view keypoint with another point's partner.
    for (std::size_t i = 0; i < n_out; ++i) {
      const PixelPair& a = points[i];
      const PixelPair& b = points[(i + 1) % n_out];
      rows.push_back(normalize_pair(cam, {a.u1, a.v1, b.u2, b.v2}));
      groups.push_back(-1);
    }
  } else {
    std::uniform_real_distribution<double> ux(0.0, cam.width);
    std::uniform_real_distribution<double> uy(0.0, cam.height);
    for (std::size_t i = 0; i < n_out; ++i) {
      const double u1 = ux(rng);
      const double v1 = uy(rng);
      const double u2 = ux(rng);
      const double v2 = uy(rng);
      rows.push_back(normalize_pair(cam, {u1, v1, u2, v2}));
      groups.push_back(-1);
    }
  }

  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  CorrespondenceSet set;
  set.coords = MatrixD(rows.size(), 4);
  set.groups.resize(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t c = 0; c < 4; ++c) set.coords(i, c) = rows[order[i]][c];
    set.groups[i] = groups[order[i]];
  }
  for (const Motion& m : poses) set.geometry.push_back(m.essential);
  set.outlier_ratio = cfg.outlier_ratio;
  set.labels = label(set.coords, set.geometry, cfg.sigma);
  return set;
}

std::string format_double(double v) {
  // Shortest text that parses back to the same double.
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

bool parse_double(std::string_view tok, double& out) {
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool parse_int(std::string_view tok, int& out) {
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

double CorrespondenceSet::inlier_ratio() const {
  if (labels.empty()) return 0.0;
  return static_cast<double>(std::count(labels.begin(), labels.end(), 1)) /
         static_cast<double>(labels.size());
}

Mat3 Camera::intrinsics() const { return {focal, 0.0, cx, 0.0, focal, cy, 0.0, 0.0, 1.0}; }

void SceneConfig::validate() const {
  if (n < 2) throw ConfigError("scene: n must be at least 2");
  if (!(outlier_ratio >= 0.0 && outlier_ratio < 1.0)) {
    throw ConfigError("scene: outlier_ratio must lie in [0, 1)");
  }
  if (motion_count < 1) throw ConfigError("scene: motion_count must be at least 1");
  if (!(camera.focal > 0.0 && camera.width > 0.0 && camera.height > 0.0)) {
    throw ConfigError("scene: camera focal length and image size must be positive");
  }
  if (!(min_depth > 0.0 && max_depth >= min_depth)) throw ConfigError("scene: invalid depth range");
  if (!(baseline > 0.0)) throw ConfigError("scene: baseline must be positive");
  if (!(max_rotation >= 0.0) || !(noise_px >= 0.0) || !(sigma > 0.0)) {
    throw ConfigError("scene: rotation range, noise and sigma must be non-negative");
  }
}

std::size_t planted_inlier_count(std::size_t n, double outlier_ratio) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * (1.0 - outlier_ratio) + 1e-9));
}

CorrespondenceSet generate_scene(const SceneConfig& cfg) { return generate(cfg, 1); }

CorrespondenceSet generate_multi_motion(const SceneConfig& cfg) { return generate(cfg, cfg.motion_count); }

EpipolarDistance symmetric_epipolar_distance(std::span<const double> row, const Mat3& e) {
  const Vector3d x1(row[0], row[1], 1.0);
  const Vector3d x2(row[2], row[3], 1.0);
  const Matrix3d em = to_eigen(e);
  const Vector3d ex1 = em * x1;
  const Vector3d etx2 = em.transpose() * x2;
  const double r = x2.dot(ex1);
  const double n1 = ex1.x() * ex1.x() + ex1.y() * ex1.y();
  const double n2 = etx2.x() * etx2.x() + etx2.y() * etx2.y();
  if (n1 == 0.0 || n2 == 0.0) return {std::numeric_limits<double>::infinity(), true};
  return {r * r * (1.0 / n1 + 1.0 / n2), false};
}

std::vector<int> label(const MatrixD& coords, std::span<const Mat3> e, double sigma) {
  require_shape(coords.cols() == 4, "label (coords)", coords.rows(), coords.cols(), coords.rows(), 4);
  if (e.empty()) throw ArgumentError("label: no essential matrix");
  std::vector<int> out(coords.rows(), 0);
  for (std::size_t i = 0; i < coords.rows(); ++i) {
    for (const Mat3& m : e) {
      if (symmetric_epipolar_distance(coords.row(i), m).value < sigma) {
        out[i] = 1;
        break;
      }
    }
  }
  return out;
}

std::vector<int> label(const MatrixD& coords, const Mat3& e, double sigma) {
  return label(coords, std::span<const Mat3>(&e, 1), sigma);
}

std::vector<int> relabel(const CorrespondenceSet& set, double sigma) {
  if (!set.has_geometry()) throw ArgumentError("relabel: scene carries no geometry");
  return label(set.coords, set.geometry, sigma);
}

std::string format_scene(const CorrespondenceSet& set) {
  std::ostringstream out;
  out << "ana-scene v1 n=" << set.size() << " ratio=" << format_double(set.outlier_ratio) << "\n";
  for (const Mat3& e : set.geometry) {
    out << "E";
    for (double v : e) out << ' ' << format_double(v);
    out << "\n";
  }
  const bool with_groups = set.has_labels() && set.groups.size() == set.size();
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (std::size_t c = 0; c < 4; ++c) out << (c ? " " : "") << format_double(set.coords(i, c));
    if (set.has_labels()) out << ' ' << set.labels[i];
    if (with_groups) out << ' ' << set.groups[i];
    out << "\n";
  }
  return out.str();
}

CorrespondenceSet parse_scene(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(1, "empty scene file");
  ++line_no;
  const auto header = split_ws(line);
  if (header.size() != 4 || header[0] != "ana-scene" || header[1] != "v1" ||
      !header[2].starts_with("n=") || !header[3].starts_with("ratio=")) {
    throw ParseError(line_no, "expected header 'ana-scene v1 n=<N> ratio=<r>'");
  }
  std::size_t n = 0;
  {
    const auto tok = header[2].substr(2);
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), n);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) throw ParseError(line_no, "bad n");
  }
  CorrespondenceSet set;
  if (!parse_double(header[3].substr(6), set.outlier_ratio)) throw ParseError(line_no, "bad ratio");

  std::vector<double> coords;
  coords.reserve(n * 4);
  std::size_t width = 0;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks[0] == "E") {
      if (rows > 0) throw ParseError(line_no, "E block after correspondence rows");
      if (toks.size() != 10) throw ParseError(line_no, "E block needs 9 values");
      Mat3 e{};
      for (std::size_t k = 0; k < 9; ++k) {
        if (!parse_double(toks[k + 1], e[k])) throw ParseError(line_no, "bad E value '" + std::string(toks[k + 1]) + "'");
      }
      set.geometry.push_back(e);
      continue;
    }
    if (toks.size() < 4 || toks.size() > 6) throw ParseError(line_no, "expected 4 to 6 fields");
    if (width == 0) width = toks.size();
    if (toks.size() != width) throw ParseError(line_no, "inconsistent field count");
    for (std::size_t c = 0; c < 4; ++c) {
      double v;
      if (!parse_double(toks[c], v)) throw ParseError(line_no, "bad coordinate '" + std::string(toks[c]) + "'");
      coords.push_back(v);
    }
    if (width >= 5) {
      int y;
      if (!parse_int(toks[4], y) || (y != 0 && y != 1)) throw ParseError(line_no, "label must be 0 or 1");
      set.labels.push_back(y);
    }
    if (width == 6) {
      int g;
      if (!parse_int(toks[5], g) || g < -1) throw ParseError(line_no, "bad group id");
      set.groups.push_back(g);
    }
    ++rows;
  }
  if (rows != n) {
    throw ParseError(line_no, "header declares n=" + std::to_string(n) + " but file has " +
                                  std::to_string(rows) + " rows");
  }
  set.coords = MatrixD(rows, 4, std::move(coords));
  return set;
}

void write_scene(const CorrespondenceSet& set, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << format_scene(set);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

CorrespondenceSet read_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scene(buf.str());
}

std::vector<std::filesystem::path> list_scene_files(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".scene") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Mat3 mat3_mul(const Mat3& a, const Mat3& b) { return from_eigen(to_eigen(a) * to_eigen(b)); }

Mat3 mat3_inverse(const Mat3& m) {
  const Matrix3d e = to_eigen(m);
  if (std::abs(e.determinant()) < 1e-300) throw DegenerateInputError("singular 3x3 matrix");
  return from_eigen(e.inverse());
}

Mat3 essential_from_pose(const Mat3& rotation, const std::array<double, 3>& t) {
  Matrix3d tx;
  tx << 0.0, -t[2], t[1], t[2], 0.0, -t[0], -t[1], t[0], 0.0;
  Matrix3d e = tx * to_eigen(rotation);
  const double norm = e.norm();
  if (norm == 0.0) throw DegenerateInputError("essential matrix from zero translation");
  return from_eigen(e / norm);
}

}  // namespace ana
