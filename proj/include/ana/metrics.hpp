#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ana/network.hpp"
#include "ana/scene.hpp"

namespace ana {

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
};

/// Confusion-matrix metrics; a zero denominator yields 0.
Metrics precision_recall_f1(std::span<const int> predicted, std::span<const int> labels);

/// Predicted inlier mask for a scene.
using Predictor = std::function<std::vector<int>(const CorrespondenceSet&)>;

/// Holds a reference to params; the model must outlive the predictor.
Predictor model_predictor(const ModelParams<float>& params, float threshold = 0.5f);
Predictor all_inlier_predictor();
Predictor oracle_predictor();

struct BucketRow {
  double lo = 0.0;  // inlier-ratio bucket [lo, hi)
  double hi = 0.0;
  std::size_t scenes = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  std::vector<Metrics> per_scene;
  std::vector<double> inlier_ratios;
  std::vector<BucketRow> buckets;
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  double mean_f1 = 0.0;
};

/// Per-scene metrics and their means per inlier-ratio bucket (equal-width
/// buckets over [0, 1]). Scenes are evaluated in parallel; results keep
/// scene order. Throws ArgumentError on an unlabeled scene.
EvalReport evaluate(std::span<const CorrespondenceSet> scenes, const Predictor& predict,
                    std::size_t buckets = 10);

std::string format_eval_report(const EvalReport& report);
std::string eval_report_csv(const EvalReport& report);

/// For each feature map (one per block) and each k: mean over inliers of the
/// fraction of inliers among the k nearest other rows (Euclidean). Result is
/// indexed [block][k-index]. Throws ArgumentError if any k is 0 or > N-1.
std::vector<std::vector<double>> knn_inlier_ratio(std::span<const Matrix<float>> features,
                                                  std::span<const int> labels,
                                                  std::span<const std::size_t> ks);

struct KnnTable {
  std::vector<std::size_t> ks;
  std::vector<std::vector<double>> ratio;  // [block][k-index], mean over scenes
  std::size_t scenes = 0;
};

/// Runs the model on each labeled scene, captures block outputs and averages
/// knn_inlier_ratio over scenes that contain at least one inlier.
KnnTable knn_table(const ModelParams<float>& params, std::span<const CorrespondenceSet> scenes,
                   std::span<const std::size_t> ks);

std::string format_knn_table(const KnnTable& table);
std::string knn_table_csv(const KnnTable& table);

}  // namespace ana
