#include "bmpnet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "bmpnet/error.hpp"
#include "json.hpp"

namespace bmp {

std::size_t worker_threads() {
  if (const char* env = std::getenv("BMP_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<std::size_t>(n);
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

namespace {

template <typename F>
void parallel_rows(std::size_t rows, F&& f) {
  const std::size_t workers = std::min(worker_threads(), std::max<std::size_t>(1, rows / 64));
  if (workers <= 1) {
    f(0, rows);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (rows + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(rows, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&f, begin, end] { f(begin, end); });
  }
  for (auto& t : pool) t.join();
}

template <typename T>
double distance(const T* a, const T* b, std::size_t d) {
  // Eight running sums so the loop vectorizes; the order is fixed, so
  // results stay reproducible.
  constexpr std::size_t kLanes = 8;
  double lane[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= d; i += kLanes) {
    for (std::size_t j = 0; j < kLanes; ++j) {
      const double diff = static_cast<double>(a[i + j]) - static_cast<double>(b[i + j]);
      lane[j] += diff * diff;
    }
  }
  double s = ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]));
  for (; i < d; ++i) {
    const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += diff * diff;
  }
  return std::sqrt(s);
}

}  // namespace

template <typename T>
std::pair<Tensor<T>, Tensor<T>> candidate_features(const Model<T>& model, const PairUniverse& universe) {
  const bool naive = !model.config.edge_blocking;
  ad::Graph<T> g;
  ConceptGraph<T> cg(g, model.concepts, universe, naive);
  const auto& cands = universe.candidates();
  if (naive) {
    std::vector<std::uint32_t> attrs, objs;
    for (Pair p : cands) {
      attrs.push_back(p.attr);
      objs.push_back(p.obj);
    }
    return {g.value(cg.naive_features(ConceptKind::Attribute, attrs)),
            g.value(cg.naive_features(ConceptKind::Object, objs))};
  }
  return {g.value(cg.blocked_features(ConceptKind::Attribute, cands)),
          g.value(cg.blocked_features(ConceptKind::Object, cands))};
}

template <typename T>
ScoreMatrix score_features(const Tensor<T>& visual_attr, const Tensor<T>& visual_obj,
                           const Tensor<T>& candidate_attr, const Tensor<T>& candidate_obj,
                           std::vector<std::size_t> labels, std::vector<std::uint8_t> unseen_column) {
  if (visual_attr.shape() != visual_obj.shape() || candidate_attr.shape() != candidate_obj.shape() ||
      visual_attr.rank() != 2 || candidate_attr.rank() != 2 || visual_attr.dim(1) != candidate_attr.dim(1)) {
    throw ShapeError("score_features: visual " + shape_str(visual_attr.shape()) + " vs candidates " +
                     shape_str(candidate_attr.shape()));
  }
  ScoreMatrix m;
  m.rows = visual_attr.dim(0);
  m.cols = candidate_attr.dim(0);
  if (labels.size() != m.rows) throw ShapeError("score_features: one label per image is required");
  if (unseen_column.size() != m.cols) throw ShapeError("score_features: one unseen flag per candidate is required");
  for (std::size_t l : labels) {
    if (l >= m.cols) throw Error("score_features: label " + std::to_string(l) + " is not a candidate");
  }
  m.labels = std::move(labels);
  m.unseen_column = std::move(unseen_column);
  m.scores.resize(m.rows * m.cols);
  const std::size_t d = visual_attr.dim(1);
  parallel_rows(m.rows, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const T* xa = visual_attr.data().data() + i * d;
      const T* xo = visual_obj.data().data() + i * d;
      for (std::size_t c = 0; c < m.cols; ++c) {
        const T* ca = candidate_attr.data().data() + c * d;
        const T* co = candidate_obj.data().data() + c * d;
        m.scores[i * m.cols + c] = -distance(xa, ca, d) - distance(xo, co, d);
      }
    }
  });
  return m;
}

template <typename T>
ScoreMatrix score_all(const Model<T>& model, const PairUniverse& universe, const Tensor<float>& features,
                      std::span<const Pair> labels) {
  if (features.rank() != 2 || features.dim(0) != labels.size()) {
    throw ShapeError("score_all: " + std::to_string(labels.size()) + " labels for features " +
                     shape_str(features.shape()));
  }
  std::vector<std::size_t> label_ids;
  label_ids.reserve(labels.size());
  for (Pair p : labels) {
    const auto id = universe.candidate_index(p);
    if (!id) throw Error("score_all: label " + universe.pair_name(p) + " is not a candidate pair");
    label_ids.push_back(*id);
  }
  std::vector<std::uint8_t> unseen(universe.candidates().size());
  for (std::size_t c = 0; c < unseen.size(); ++c) unseen[c] = universe.candidate_is_unseen(c) ? 1 : 0;

  auto [cand_attr, cand_obj] = candidate_features(model, universe);

  const std::size_t m = features.dim(0);
  const std::size_t in = features.dim(1);
  const std::size_t d = model.config.dim;
  Tensor<T> va(Shape{m, d}), vo(Shape{m, d});
  constexpr std::size_t kChunk = 1024;
  for (std::size_t begin = 0; begin < m; begin += kChunk) {
    const std::size_t n = std::min(kChunk, m - begin);
    std::vector<T> rows(n * in);
    for (std::size_t i = 0; i < n * in; ++i) rows[i] = static_cast<T>(features.data()[begin * in + i]);
    ad::Graph<T> g;
    VisualGraph<T> vg(g, model.visual, model.config.use_residue);
    const ad::Var x = vg.encode_composite(g.constant(Tensor<T>({n, in}, std::move(rows))), EncodeMode::Infer);
    const auto [a, o] = vg.extract_primitives(x);
    std::copy(g.value(a).data().begin(), g.value(a).data().end(), va.values().begin() + begin * d);
    std::copy(g.value(o).data().begin(), g.value(o).data().end(), vo.values().begin() + begin * d);
  }
  return score_features(va, vo, cand_attr, cand_obj, std::move(label_ids), std::move(unseen));
}

std::vector<std::size_t> predict_topk(std::span<const double> row, std::span<const std::uint8_t> unseen_column,
                                      double bias, std::size_t k) {
  if (row.size() != unseen_column.size()) throw ShapeError("predict_topk: score and flag widths differ");
  std::vector<std::size_t> ids(row.size());
  std::iota(ids.begin(), ids.end(), 0);
  auto adjusted = [&](std::size_t c) { return row[c] + (unseen_column[c] ? bias : 0.0); };
  k = std::min(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double sa = adjusted(a), sb = adjusted(b);
                      return sa != sb ? sa > sb : a < b;
                    });
  ids.resize(k);
  return ids;
}

CurvePoint EvalCurve::at(double bias) const {
  // seen-label images: correct when bias < t; unseen-label: when bias > t
  const auto seen_ok = seen_always_ + static_cast<std::size_t>(
      seen_thresholds_.end() - std::upper_bound(seen_thresholds_.begin(), seen_thresholds_.end(), bias));
  const auto unseen_ok = unseen_always_ + static_cast<std::size_t>(
      std::lower_bound(unseen_thresholds_.begin(), unseen_thresholds_.end(), bias) - unseen_thresholds_.begin());
  return {bias, static_cast<double>(seen_ok) / static_cast<double>(seen_total_),
          static_cast<double>(unseen_ok) / static_cast<double>(unseen_total_)};
}

EvalCurve calibration_sweep(const ScoreMatrix& scores, std::size_t k) {
  if (k == 0) throw Error("calibration sweep: k must be positive");
  EvalCurve curve;
  curve.k = k;
  std::vector<double> seen_vals, unseen_vals;
  for (std::size_t i = 0; i < scores.rows; ++i) {
    const auto row = scores.row(i);
    const std::size_t g = scores.labels[i];
    const double sg = row[g];
    const bool gt_unseen = scores.unseen_column[g] != 0;
    // Scores of the other group, and how many of the label's own group rank
    // above it (ties to the lower id).
    seen_vals.clear();
    unseen_vals.clear();
    std::size_t same_above = 0;
    for (std::size_t c = 0; c < scores.cols; ++c) {
      const bool u = scores.unseen_column[c] != 0;
      if (u == gt_unseen) {
        if (c != g && (row[c] > sg || (row[c] == sg && c < g))) ++same_above;
      } else {
        (u ? unseen_vals : seen_vals).push_back(row[c]);
      }
    }
    auto& others = gt_unseen ? seen_vals : unseen_vals;
    const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(same_above);
    if (gt_unseen) {
      ++curve.unseen_total_;
    } else {
      ++curve.seen_total_;
    }
    if (r <= 0) continue;  // never correct
    if (static_cast<std::size_t>(r) > others.size()) {
      ++(gt_unseen ? curve.unseen_always_ : curve.seen_always_);
      continue;
    }
    std::nth_element(others.begin(), others.begin() + (r - 1), others.end(), std::greater<>());
    const double rth = others[static_cast<std::size_t>(r - 1)];
    if (gt_unseen) {
      curve.unseen_thresholds_.push_back(rth - sg);
    } else {
      curve.seen_thresholds_.push_back(sg - rth);
    }
  }
  if (curve.seen_total_ == 0) throw Error("calibration sweep: no images with a seen ground-truth pair");
  if (curve.unseen_total_ == 0) throw Error("calibration sweep: no images with an unseen ground-truth pair");
  std::sort(curve.seen_thresholds_.begin(), curve.seen_thresholds_.end());
  std::sort(curve.unseen_thresholds_.begin(), curve.unseen_thresholds_.end());

  auto& bp = curve.breakpoints_;
  bp.insert(bp.end(), curve.seen_thresholds_.begin(), curve.seen_thresholds_.end());
  bp.insert(bp.end(), curve.unseen_thresholds_.begin(), curve.unseen_thresholds_.end());
  std::sort(bp.begin(), bp.end());
  bp.erase(std::unique(bp.begin(), bp.end()), bp.end());

  constexpr double inf = std::numeric_limits<double>::infinity();
  curve.points.push_back(curve.at(-inf));
  for (std::size_t i = 0; i + 1 < bp.size(); ++i) curve.points.push_back(curve.at(bp[i] + (bp[i + 1] - bp[i]) / 2));
  curve.points.push_back(curve.at(inf));
  return curve;
}

double auc(std::span<const CurvePoint> points) {
  std::vector<CurvePoint> sorted(points.begin(), points.end());
  // Walk the curve from the unseen axis to the seen axis: along a monotone
  // curve unseen accuracy falls as seen accuracy rises, so equal-seen points
  // (vertical steps) are ordered by falling unseen accuracy.
  std::sort(sorted.begin(), sorted.end(), [](const CurvePoint& a, const CurvePoint& b) {
    return a.seen != b.seen ? a.seen < b.seen : a.unseen > b.unseen;
  });
  double area = 0;
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    area += (sorted[i + 1].seen - sorted[i].seen) * (sorted[i].unseen + sorted[i + 1].unseen) / 2;
  }
  return area;
}

SplitMetrics curve_metrics(const EvalCurve& curve) {
  SplitMetrics m;
  m.auc = auc(curve);
  for (const CurvePoint& p : curve.points) {
    m.best_seen = std::max(m.best_seen, p.seen);
    m.best_unseen = std::max(m.best_unseen, p.unseen);
    if (p.seen + p.unseen > 0) m.ch_mean = std::max(m.ch_mean, 2 * p.seen * p.unseen / (p.seen + p.unseen));
  }
  return m;
}

template <typename T>
EvalReport evaluate(const Model<T>& model, const Dataset& data, Split split, std::span<const std::size_t> ks) {
  const auto records = data.images_in(split);
  std::vector<Pair> labels;
  labels.reserve(records.size());
  for (const auto& r : records) labels.push_back(r.pair);
  const ScoreMatrix scores = score_all(model, data.universe, data.features_of(records), labels);
  EvalReport report;
  report.split = split;
  for (std::size_t k : ks) {
    report.ks.push_back(k);
    report.curves.push_back(calibration_sweep(scores, k));
    report.metrics.push_back(curve_metrics(report.curves.back()));
  }
  return report;
}

std::string report_json(std::span<const EvalReport> reports) {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const auto& r : reports) {
    for (std::size_t i = 0; i < r.ks.size(); ++i) {
      const auto& m = r.metrics[i];
      out[std::to_string(r.ks[i])][std::string(split_name(r.split))] = {
          {"auc", 100 * m.auc},
          {"best_seen", 100 * m.best_seen},
          {"best_unseen", 100 * m.best_unseen},
          {"ch_mean", 100 * m.ch_mean},
      };
    }
  }
  return out.dump(2) + "\n";
}

std::string curves_csv(std::span<const EvalReport> reports) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "split,k,bias,seen,unseen\n";
  for (const auto& r : reports) {
    for (std::size_t i = 0; i < r.ks.size(); ++i) {
      for (const CurvePoint& p : r.curves[i].points) {
        os << split_name(r.split) << ',' << r.ks[i] << ',';
        if (std::isinf(p.bias)) {
          os << (p.bias < 0 ? "-inf" : "inf");
        } else {
          os << p.bias;
        }
        os << ',' << 100 * p.seen << ',' << 100 * p.unseen << '\n';
      }
    }
  }
  return os.str();
}

#define BMP_INSTANTIATE(T)                                                                             \
  template std::pair<Tensor<T>, Tensor<T>> candidate_features(const Model<T>&, const PairUniverse&);  \
  template ScoreMatrix score_all(const Model<T>&, const PairUniverse&, const Tensor<float>&,           \
                                 std::span<const Pair>);                                              \
  template ScoreMatrix score_features(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,            \
                                      const Tensor<T>&, std::vector<std::size_t>,                      \
                                      std::vector<std::uint8_t>);                                      \
  template EvalReport evaluate(const Model<T>&, const Dataset&, Split, std::span<const std::size_t>);
BMP_INSTANTIATE(float)
BMP_INSTANTIATE(double)
#undef BMP_INSTANTIATE

}  // namespace bmp
