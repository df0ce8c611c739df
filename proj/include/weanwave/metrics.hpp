#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "weanwave/common.hpp"

namespace weanwave {

// Binary metrics convention: label 1 (weaning failure) is the positive class.

// ---------------------------------------------------------------------------
// ROC curve and AUC.
// ---------------------------------------------------------------------------

struct RocPoint {
  double threshold = 0.0;  // predict positive when score >= threshold
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0,0) at +inf to (1,1)
  double auc = 0.0;
};

// Threshold sweep over the distinct scores, descending; samples sharing a
// score enter as one group so tied scores produce a single ROC vertex (and
// the trapezoid over that edge equals the half-credit tie convention). AUC
// is the trapezoidal area under the resulting polyline.
inline RocCurve roc_curve(const std::vector<double>& scores,
                          const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw ShapeMismatch("scores/labels length mismatch");
  if (scores.empty()) throw EmptySeries("roc of no samples");
  std::size_t n_pos = 0, n_neg = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw InvalidArgument("labels must be 0 or 1");
    if (l == 1) ++n_pos; else ++n_neg;
  }
  if (n_pos == 0 || n_neg == 0)
    throw SingleClassOnly("roc needs both classes present");

  std::vector<std::size_t> idx(scores.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  RocCurve rc;
  rc.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < idx.size()) {
    const double s = scores[idx[i]];
    std::size_t j = i;
    for (; j < idx.size() && scores[idx[j]] == s; ++j) {
      if (labels[idx[j]] == 1) ++tp; else ++fp;
    }
    rc.points.push_back({s, static_cast<double>(fp) / static_cast<double>(n_neg),
                         static_cast<double>(tp) / static_cast<double>(n_pos)});
    i = j;
  }
  for (std::size_t k = 1; k < rc.points.size(); ++k) {
    const RocPoint& a = rc.points[k - 1];
    const RocPoint& b = rc.points[k];
    rc.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  return rc;
}

inline double roc_auc(const std::vector<double>& scores,
                      const std::vector<int>& labels) {
  return roc_curve(scores, labels).auc;
}

// ---------------------------------------------------------------------------
// AUC-weighted probability ensembling.
// ---------------------------------------------------------------------------

// Blends per-model class probabilities with weights proportional to each
// model's AUC: out = sum_i auc_i * p_i / sum_i auc_i.
inline std::vector<double> weighted_ensemble(
    const std::vector<std::vector<double>>& model_probs,
    const std::vector<double>& aucs) {
  if (model_probs.empty()) throw EmptySeries("ensemble of no models");
  if (model_probs.size() != aucs.size())
    throw ShapeMismatch("one auc weight per model required");
  const std::size_t n_classes = model_probs[0].size();
  double wsum = 0.0;
  for (double a : aucs) {
    if (!(a >= 0.0)) throw InvalidArgument("auc weights must be non-negative");
    wsum += a;
  }
  if (wsum <= 0.0) throw AllZeroWeights("ensemble weights sum to zero");
  std::vector<double> out(n_classes, 0.0);
  for (std::size_t i = 0; i < model_probs.size(); ++i) {
    if (model_probs[i].size() != n_classes)
      throw ShapeMismatch("inconsistent class count across models");
    for (std::size_t k = 0; k < n_classes; ++k)
      out[k] += aucs[i] * model_probs[i][k];
  }
  for (double& v : out) v /= wsum;
  return out;
}

// Ensemble decision: argmax probability; exact ties resolve toward the
// higher class index, i.e. the positive (failure) class in binary use.
inline int ensemble_predict(const std::vector<double>& probs) {
  if (probs.empty()) throw EmptySeries("predict on empty probabilities");
  std::size_t arg = 0;
  for (std::size_t k = 1; k < probs.size(); ++k)
    if (probs[k] >= probs[arg]) arg = k;
  return static_cast<int>(arg);
}

// ---------------------------------------------------------------------------
// Confusion-matrix metrics.
// ---------------------------------------------------------------------------

struct MetricSet {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  double accuracy = 0.0;
  double recall = 0.0;     // tp / (tp + fn)
  double precision = 0.0;  // tp / (tp + fp)
  double f1 = 0.0;
  double tnr = 0.0;        // tn / (tn + fp)
  // Zero-denominator metrics report 0 with the matching flag raised.
  bool recall_degenerate = false;
  bool precision_degenerate = false;
  bool f1_degenerate = false;
  bool tnr_degenerate = false;
};

inline MetricSet classification_metrics(const std::vector<int>& predicted,
                                        const std::vector<int>& labels) {
  if (predicted.size() != labels.size())
    throw ShapeMismatch("predictions/labels length mismatch");
  if (predicted.empty()) throw EmptySeries("metrics of no samples");
  MetricSet m;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if ((predicted[i] != 0 && predicted[i] != 1) ||
        (labels[i] != 0 && labels[i] != 1))
      throw InvalidArgument("binary metrics need 0/1 predictions and labels");
    if (labels[i] == 1)
      predicted[i] == 1 ? ++m.tp : ++m.fn;
    else
      predicted[i] == 1 ? ++m.fp : ++m.tn;
  }
  const double n = static_cast<double>(predicted.size());
  m.accuracy = static_cast<double>(m.tp + m.tn) / n;
  if (m.tp + m.fn > 0)
    m.recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
  else
    m.recall_degenerate = true;
  if (m.tp + m.fp > 0)
    m.precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
  else
    m.precision_degenerate = true;
  if (m.precision + m.recall > 0.0)
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  else
    m.f1_degenerate = true;
  if (m.tn + m.fp > 0)
    m.tnr = static_cast<double>(m.tn) / static_cast<double>(m.tn + m.fp);
  else
    m.tnr_degenerate = true;
  return m;
}

// ---------------------------------------------------------------------------
// Repeated-run aggregation.
// ---------------------------------------------------------------------------

struct RunRow {
  std::string run_id;
  double accuracy = 0.0, recall = 0.0, precision = 0.0, f1 = 0.0;
};

struct AggregateStats {
  std::size_t n_runs = 0;
  double mean_accuracy = 0.0, std_accuracy = 0.0;
  double mean_recall = 0.0, std_recall = 0.0;
  double mean_precision = 0.0, std_precision = 0.0;
  double mean_f1 = 0.0, std_f1 = 0.0;
  bool std_degenerate = false;  // single run: stds reported as 0
};

inline AggregateStats run_aggregate(const std::vector<RunRow>& rows) {
  if (rows.empty()) throw EmptySeries("aggregate of no runs");
  AggregateStats a;
  a.n_runs = rows.size();
  auto collect = [&](auto field, double& mean, double& sd) {
    std::vector<double> v;
    v.reserve(rows.size());
    for (const RunRow& r : rows) v.push_back(field(r));
    mean = mean_of(v);
    sd = v.size() > 1 ? sample_std(v) : 0.0;
  };
  collect([](const RunRow& r) { return r.accuracy; }, a.mean_accuracy,
          a.std_accuracy);
  collect([](const RunRow& r) { return r.recall; }, a.mean_recall,
          a.std_recall);
  collect([](const RunRow& r) { return r.precision; }, a.mean_precision,
          a.std_precision);
  collect([](const RunRow& r) { return r.f1; }, a.mean_f1, a.std_f1);
  a.std_degenerate = rows.size() < 2;
  return a;
}

inline void write_runs_csv(const std::vector<RunRow>& rows,
                           const std::filesystem::path& path,
                           const std::string& header_comment = "") {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for write: " + path.string());
  if (!header_comment.empty()) f << "# " << header_comment << '\n';
  f << "run_id,accuracy,recall,precision,f1\n";
  for (const RunRow& r : rows)
    f << r.run_id << ',' << format_double(r.accuracy) << ','
      << format_double(r.recall) << ',' << format_double(r.precision) << ','
      << format_double(r.f1) << '\n';
  if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace weanwave
