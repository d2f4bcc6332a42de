#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ana/matrix.hpp"

namespace ana {

/// Row-major 3x3 matrix.
using Mat3 = std::array<double, 9>;

/// Putative correspondences: rows (x1, y1, x2, y2) in normalized image
/// coordinates, plus optional ground truth.
struct CorrespondenceSet {
  MatrixD coords;            // N x 4
  std::vector<int> labels;   // empty, or N entries in {0, 1}
  std::vector<int> groups;   // empty, or N entries: motion index, -1 for planted outliers
  std::vector<Mat3> geometry;  // essential matrices (unit Frobenius norm), one per motion
  double outlier_ratio = 0.0;  // declared

  std::size_t size() const noexcept { return coords.rows(); }
  bool has_labels() const noexcept { return !labels.empty(); }
  bool has_geometry() const noexcept { return !geometry.empty(); }
  double inlier_ratio() const;  // realized, from labels
};

struct Camera {
  double focal = 320.0;
  double cx = 320.0;
  double cy = 240.0;
  double width = 640.0;
  double height = 480.0;

  Mat3 intrinsics() const;
};

enum class OutlierMode {
  uniform,   // independent uniform keypoints in each image
  shuffled,  // projections of real points, paired with the wrong partner
};

struct SceneConfig {
  std::size_t n = 512;
  double outlier_ratio = 0.6;
  Camera camera;
  double max_rotation = 0.25;  // radians, angle drawn uniformly in [0, max]
  double baseline = 0.5;       // translation length, same units as depth
  double min_depth = 4.0;
  double max_depth = 12.0;
  double noise_px = 0.5;
  std::size_t motion_count = 1;
  OutlierMode outlier_mode = OutlierMode::uniform;
  double sigma = 1e-4;
  std::uint64_t seed = 0;

  void validate() const;
};

/// floor(n * (1 - outlier_ratio)), with a 1e-9 guard against representation
/// error in the product.
std::size_t planted_inlier_count(std::size_t n, double outlier_ratio);

/// Single relative pose; labels from label() against its essential matrix.
CorrespondenceSet generate_scene(const SceneConfig& cfg);

/// motion_count independent relative poses sharing the inlier budget; a row
/// is labeled 1 when it is consistent with any of them.
CorrespondenceSet generate_multi_motion(const SceneConfig& cfg);

struct EpipolarDistance {
  double value = 0.0;
  bool degenerate = false;  // an epipolar line had a vanishing gradient; value is +inf
};

/// (x2^T E x1)^2 * (1 / ((E x1)_1^2 + (E x1)_2^2) + 1 / ((E^T x2)_1^2 + (E^T x2)_2^2))
EpipolarDistance symmetric_epipolar_distance(std::span<const double> row, const Mat3& e);

/// y_i = 1 iff distance < sigma (strict). With several matrices, the
/// smallest distance counts.
std::vector<int> label(const MatrixD& coords, std::span<const Mat3> e, double sigma = 1e-4);
std::vector<int> label(const MatrixD& coords, const Mat3& e, double sigma = 1e-4);

/// Recomputes labels from the set's own geometry. Throws ArgumentError when
/// the set carries no geometry.
std::vector<int> relabel(const CorrespondenceSet& set, double sigma = 1e-4);

std::string format_scene(const CorrespondenceSet& set);
CorrespondenceSet parse_scene(const std::string& text);
void write_scene(const CorrespondenceSet& set, const std::filesystem::path& path);
CorrespondenceSet read_scene(const std::filesystem::path& path);

/// Scene files (*.scene) in a directory, sorted by name.
std::vector<std::filesystem::path> list_scene_files(const std::filesystem::path& dir);

// Small 3x3 helpers shared with normalization and tests.
Mat3 mat3_mul(const Mat3& a, const Mat3& b);
Mat3 mat3_inverse(const Mat3& m);
Mat3 essential_from_pose(const Mat3& rotation, const std::array<double, 3>& translation);

}  // namespace ana
