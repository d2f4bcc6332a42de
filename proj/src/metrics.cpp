#include "ana/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "ana/errors.hpp"
#include "ana/report.hpp"

namespace ana {

Metrics precision_recall_f1(std::span<const int> predicted, std::span<const int> labels) {
  require_shape(predicted.size() == labels.size(), "precision_recall_f1", predicted.size(), 1,
                labels.size(), 1);
  if (labels.empty()) throw ArgumentError("precision_recall_f1: empty input");
  Metrics m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predicted[i] != 0;
    const bool y = labels[i] != 0;
    if (p && y) ++m.tp;
    else if (p) ++m.fp;
    else if (y) ++m.fn;
    else ++m.tn;
  }
  const double tp = static_cast<double>(m.tp);
  m.precision = m.tp + m.fp ? tp / static_cast<double>(m.tp + m.fp) : 0.0;
  m.recall = m.tp + m.fn ? tp / static_cast<double>(m.tp + m.fn) : 0.0;
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

Predictor model_predictor(const ModelParams<float>& params, float threshold) {
  return [&params, threshold](const CorrespondenceSet& s) {
    const MatrixF logits = forward(s.coords.cast<float>(), params);
    const std::vector<float> w = predict(logits);
    return inlier_mask<float>(w, threshold);
  };
}

Predictor all_inlier_predictor() {
  return [](const CorrespondenceSet& s) { return std::vector<int>(s.size(), 1); };
}

Predictor oracle_predictor() {
  return [](const CorrespondenceSet& s) {
    if (!s.has_labels()) throw ArgumentError("oracle predictor: scene has no labels");
    return s.labels;
  };
}

EvalReport evaluate(std::span<const CorrespondenceSet> scenes, const Predictor& predict,
                    std::size_t buckets) {
  if (buckets == 0) throw ArgumentError("evaluate: bucket count must be positive");
  for (std::size_t i = 0; i < scenes.size(); ++i)
    if (!scenes[i].has_labels())
      throw ArgumentError("evaluate: scene " + std::to_string(i) + " has no labels");

  EvalReport r;
  r.per_scene.resize(scenes.size());
  r.inlier_ratios.resize(scenes.size());
  std::vector<std::optional<std::string>> failure(scenes.size());
  const auto count = static_cast<std::ptrdiff_t>(scenes.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      const auto& s = scenes[static_cast<std::size_t>(i)];
      const std::vector<int> pred = predict(s);
      r.per_scene[static_cast<std::size_t>(i)] = precision_recall_f1(pred, s.labels);
      r.inlier_ratios[static_cast<std::size_t>(i)] = s.inlier_ratio();
    } catch (const std::exception& e) {
      failure[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (std::size_t i = 0; i < failure.size(); ++i)
    if (failure[i]) throw EvaluationError("evaluate: scene " + std::to_string(i) + ": " + *failure[i]);

  r.buckets.resize(buckets);
  const double width = 1.0 / static_cast<double>(buckets);
  for (std::size_t b = 0; b < buckets; ++b) {
    r.buckets[b].lo = static_cast<double>(b) * width;
    r.buckets[b].hi = static_cast<double>(b + 1) * width;
  }
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& m = r.per_scene[i];
    const double ratio = std::clamp(r.inlier_ratios[i], 0.0, 1.0);
    const auto b = std::min(static_cast<std::size_t>(std::floor(ratio * static_cast<double>(buckets))),
                            buckets - 1);
    auto& row = r.buckets[b];
    ++row.scenes;
    row.precision += m.precision;
    row.recall += m.recall;
    row.f1 += m.f1;
    r.mean_precision += m.precision;
    r.mean_recall += m.recall;
    r.mean_f1 += m.f1;
  }
  for (auto& row : r.buckets) {
    if (row.scenes == 0) continue;
    const double n = static_cast<double>(row.scenes);
    row.precision /= n;
    row.recall /= n;
    row.f1 /= n;
  }
  if (!scenes.empty()) {
    const double n = static_cast<double>(scenes.size());
    r.mean_precision /= n;
    r.mean_recall /= n;
    r.mean_f1 /= n;
  }
  return r;
}

namespace {

Table eval_table(const EvalReport& report) {
  Table t{{"inlier_ratio", "scenes", "precision", "recall", "f1"}, {}};
  for (const auto& b : report.buckets) {
    const std::string range = fixed(b.lo, 2) + "-" + fixed(b.hi, 2);
    if (b.scenes == 0) {
      t.rows.push_back({range, "0", "", "", ""});
      continue;
    }
    t.rows.push_back({range, std::to_string(b.scenes), fixed(b.precision, 4), fixed(b.recall, 4),
                      fixed(b.f1, 4)});
  }
  t.rows.push_back({"all", std::to_string(report.per_scene.size()), fixed(report.mean_precision, 4),
                    fixed(report.mean_recall, 4), fixed(report.mean_f1, 4)});
  return t;
}

}  // namespace

std::string format_eval_report(const EvalReport& report) { return to_text(eval_table(report)); }

std::string eval_report_csv(const EvalReport& report) { return to_csv(eval_table(report)); }

std::vector<std::vector<double>> knn_inlier_ratio(std::span<const Matrix<float>> features,
                                                  std::span<const int> labels,
                                                  std::span<const std::size_t> ks) {
  std::vector<std::vector<double>> out(features.size(), std::vector<double>(ks.size(), 0.0));
  const std::size_t n = labels.size();
  for (std::size_t k : ks)
    if (k == 0 || k + 1 > n)
      throw ArgumentError("knn_inlier_ratio: k=" + std::to_string(k) + " outside [1, " +
                          std::to_string(n == 0 ? 0 : n - 1) + "]");
  if (ks.empty()) return out;
  const std::size_t k_max = *std::max_element(ks.begin(), ks.end());

  std::vector<std::size_t> inliers;
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i]) inliers.push_back(i);
  if (inliers.empty()) return out;

  for (std::size_t b = 0; b < features.size(); ++b) {
    const MatrixF& f = features[b];
    require_shape(f.rows() == n, "knn_inlier_ratio", f.rows(), f.cols(), n, f.cols());

    std::vector<std::vector<double>> hits(inliers.size(), std::vector<double>(ks.size(), 0.0));
    const auto count = static_cast<std::ptrdiff_t>(inliers.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t q = 0; q < count; ++q) {
      const std::size_t i = inliers[static_cast<std::size_t>(q)];
      std::vector<std::pair<double, std::size_t>> d;
      d.reserve(n - 1);
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) {
          double dist = 0.0;
          for (std::size_t c = 0; c < f.cols(); ++c) {
            const double diff = static_cast<double>(f(i, c)) - static_cast<double>(f(j, c));
            dist += diff * diff;
          }
          d.emplace_back(dist, j);
        }
      std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k_max), d.end());
      for (std::size_t c = 0; c < ks.size(); ++c) {
        std::size_t in = 0;
        for (std::size_t r = 0; r < ks[c]; ++r) in += labels[d[r].second] ? 1 : 0;
        hits[static_cast<std::size_t>(q)][c] = static_cast<double>(in) / static_cast<double>(ks[c]);
      }
    }
    for (const auto& h : hits)
      for (std::size_t c = 0; c < ks.size(); ++c) out[b][c] += h[c];
    for (double& v : out[b]) v /= static_cast<double>(inliers.size());
  }
  return out;
}

KnnTable knn_table(const ModelParams<float>& params, std::span<const CorrespondenceSet> scenes,
                   std::span<const std::size_t> ks) {
  KnnTable t;
  t.ks.assign(ks.begin(), ks.end());
  t.ratio.assign(params.blocks.size(), std::vector<double>(ks.size(), 0.0));
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto& scene = scenes[s];
    if (!scene.has_labels()) throw ArgumentError("knn: scene " + std::to_string(s) + " has no labels");
    if (std::none_of(scene.labels.begin(), scene.labels.end(), [](int v) { return v != 0; })) continue;
    ForwardTrace<float> trace;
    forward(scene.coords.cast<float>(), params, &trace);
    std::vector<MatrixF> feats;
    for (auto& b : trace.blocks) feats.push_back(std::move(b.output));
    const auto r = knn_inlier_ratio(feats, scene.labels, ks);
    for (std::size_t b = 0; b < r.size(); ++b)
      for (std::size_t c = 0; c < ks.size(); ++c) t.ratio[b][c] += r[b][c];
    ++t.scenes;
  }
  if (t.scenes)
    for (auto& row : t.ratio)
      for (double& v : row) v /= static_cast<double>(t.scenes);
  return t;
}

namespace {

Table knn_as_table(const KnnTable& t) {
  Table out;
  out.header.push_back("block");
  for (std::size_t k : t.ks) out.header.push_back("k=" + std::to_string(k));
  for (std::size_t b = 0; b < t.ratio.size(); ++b) {
    std::vector<std::string> row{std::to_string(b + 1)};
    for (double v : t.ratio[b]) row.push_back(fixed(v, 4));
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace

std::string format_knn_table(const KnnTable& table) {
  return "scenes: " + std::to_string(table.scenes) + "\n" + to_text(knn_as_table(table));
}

std::string knn_table_csv(const KnnTable& table) { return to_csv(knn_as_table(table)); }

}  // namespace ana
