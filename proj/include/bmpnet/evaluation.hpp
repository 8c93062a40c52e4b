#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bmpnet/dataset.hpp"
#include "bmpnet/model.hpp"

namespace bmp {

// Worker count for scoring: BMP_THREADS if set to a positive integer,
// otherwise the hardware concurrency.
std::size_t worker_threads();

// scores[i * cols + c] is image i's score for candidate c (candidate ids
// follow PairUniverse::candidates()).
struct ScoreMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> scores;
  std::vector<std::size_t> labels;            // ground-truth candidate per image
  std::vector<std::uint8_t> unseen_column;    // 1 for unseen candidates

  double at(std::size_t r, std::size_t c) const { return scores[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {scores.data() + r * cols, cols}; }
  bool label_unseen(std::size_t r) const { return unseen_column[labels[r]] != 0; }
};

// Candidate concept features, [|C|, d] each: blocked message passing when
// the model uses edge blocking, naive otherwise.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> candidate_features(const Model<T>& model, const PairUniverse& universe);

// score = -d(x_a, c_a) - d(x_o, c_o), accumulated in double. Every label must
// be a candidate pair.
template <typename T>
ScoreMatrix score_all(const Model<T>& model, const PairUniverse& universe, const Tensor<float>& features,
                      std::span<const Pair> labels);

// Builds a matrix from precomputed visual and candidate features.
template <typename T>
ScoreMatrix score_features(const Tensor<T>& visual_attr, const Tensor<T>& visual_obj,
                           const Tensor<T>& candidate_attr, const Tensor<T>& candidate_obj,
                           std::vector<std::size_t> labels, std::vector<std::uint8_t> unseen_column);

// Top-k candidate ids after adding `bias` to unseen columns; ties go to the
// lower id.
std::vector<std::size_t> predict_topk(std::span<const double> row, std::span<const std::uint8_t> unseen_column,
                                      double bias, std::size_t k);

struct CurvePoint {
  double bias = 0;
  double seen = 0;    // fraction of seen-label images correct
  double unseen = 0;  // fraction of unseen-label images correct
};

// Seen and unseen top-k accuracy as piecewise-constant functions of the
// bias. Each image contributes one threshold: a seen-label image is correct
// for bias < t, an unseen-label image for bias > t (or always / never).
class EvalCurve {
 public:
  std::size_t k = 1;
  std::vector<CurvePoint> points;  // -inf, midpoints between thresholds, +inf

  CurvePoint at(double bias) const;
  // Distinct thresholds in ascending order.
  const std::vector<double>& breakpoints() const { return breakpoints_; }

 private:
  friend EvalCurve calibration_sweep(const ScoreMatrix&, std::size_t);
  std::vector<double> seen_thresholds_;    // sorted
  std::vector<double> unseen_thresholds_;  // sorted
  std::vector<double> breakpoints_;
  std::size_t seen_always_ = 0, unseen_always_ = 0;
  std::size_t seen_total_ = 0, unseen_total_ = 0;
};

// Throws Error naming the empty side if there are no seen-label or no
// unseen-label images.
EvalCurve calibration_sweep(const ScoreMatrix& scores, std::size_t k);

// Trapezoidal area under unseen accuracy (y) against seen accuracy (x).
double auc(std::span<const CurvePoint> points);
inline double auc(const EvalCurve& curve) { return auc(curve.points); }

struct SplitMetrics {
  double auc = 0;
  double best_seen = 0;
  double best_unseen = 0;
  double ch_mean = 0;  // best harmonic mean of seen and unseen accuracy
};

SplitMetrics curve_metrics(const EvalCurve& curve);

struct EvalReport {
  Split split = Split::Test;
  std::vector<std::size_t> ks;
  std::vector<SplitMetrics> metrics;  // fractions, one per k
  std::vector<EvalCurve> curves;
};

template <typename T>
EvalReport evaluate(const Model<T>& model, const Dataset& data, Split split, std::span<const std::size_t> ks);

// {"<k>": {"<split>": {"auc", "best_seen", "best_unseen", "ch_mean"}}} in percent.
std::string report_json(std::span<const EvalReport> reports);
// split,k,bias,seen,unseen rows; accuracies in percent.
std::string curves_csv(std::span<const EvalReport> reports);

}  // namespace bmp
