#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

#include "bmpnet/concept_graph.hpp"
#include "bmpnet/error.hpp"
#include "bmpnet/evaluation.hpp"
#include "bmpnet/training.hpp"
#include "eval_oracle.hpp"
#include "support.hpp"

namespace bmp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ScoreMatrix matrix(std::size_t rows, std::size_t cols, std::vector<double> scores, std::vector<std::size_t> labels,
                   std::vector<std::uint8_t> unseen) {
  return ScoreMatrix{rows, cols, std::move(scores), std::move(labels), std::move(unseen)};
}

// ------------------------------------------------------------------ scoring

TEST(Score, TwoImagesThreePairsMatchScalarOracle) {
  // d = 2; hand values chosen so every distance is a 3-4-5 or axis distance.
  const Tensor<double> va({2, 2}, {0, 0, 1, 1});
  const Tensor<double> vo({2, 2}, {1, 0, 0, 2});
  const Tensor<double> ca({3, 2}, {3, 4, 0, 0, 1, 1});
  const Tensor<double> co({3, 2}, {1, 0, 4, 3, 0, 0});
  const ScoreMatrix m = score_features(va, vo, ca, co, {0, 2}, {0, 1, 0});
  // image 0: d_a = 5, 0, sqrt2 ; d_o = 0, sqrt18, 1
  // image 1: d_a = sqrt13, sqrt2, 0 ; d_o = sqrt5, sqrt17, 2
  const double want[6] = {-5.0, -std::sqrt(18.0), -std::sqrt(2.0) - 1,
                          -std::sqrt(13.0) - std::sqrt(5.0), -std::sqrt(2.0) - std::sqrt(17.0), -2.0};
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(m.scores[i], want[i], 1e-15) << i;
  EXPECT_EQ(m.labels, (std::vector<std::size_t>{0, 2}));
  EXPECT_TRUE(m.label_unseen(0) == false && m.label_unseen(1) == false);
}

TEST(Score, ExactMatchScoresZero) {
  const Tensor<double> v({1, 3}, {0.2, -1, 4});
  const ScoreMatrix m = score_features(v, v, v, v, {0}, {0});
  EXPECT_EQ(m.scores[0], 0.0);
}

TEST(Score, PermutingCandidatesPermutesColumns) {
  std::mt19937_64 gen(3);
  const Tensor<double> va = test::uniform({4, 5}, gen), vo = test::uniform({4, 5}, gen);
  const Tensor<double> ca = test::uniform({3, 5}, gen), co = test::uniform({3, 5}, gen);
  const ScoreMatrix m = score_features(va, vo, ca, co, {0, 1, 2, 0}, {0, 1, 0});
  const std::vector<std::size_t> perm = {2, 0, 1};
  Tensor<double> pa({3, 5}), po({3, 5});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t j = 0; j < 5; ++j) {
      pa.at(c, j) = ca.at(perm[c], j);
      po.at(c, j) = co.at(perm[c], j);
    }
  const ScoreMatrix p = score_features(va, vo, pa, po, {0, 1, 2, 0}, {0, 0, 1});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(p.at(i, c), m.at(i, perm[c]));
}

TEST(Score, ModelScoresMatchComponentOracle) {
  const PairUniverse u({"a", "b"}, {"x", "y"}, {{0, 0}, {1, 1}}, {{0, 1}});
  Rng rng(5);
  const ModelConfig mc{6, 4, false, true, true};
  const Model<double> model = Model<double>::init(mc, 2, 2, rng);
  std::mt19937_64 gen(6);
  const Tensor<double> f64 = test::uniform({2, 4}, gen);
  const Tensor<float> features = f64.cast<float>();
  const std::vector<Pair> labels = {{0, 1}, {1, 1}};
  const ScoreMatrix m = score_all(model, u, features, labels);
  ASSERT_EQ(m.rows, 2u);
  ASSERT_EQ(m.cols, 3u);
  for (std::size_t i = 0; i < 2; ++i) {
    Tensor<double> f({4});
    for (std::size_t j = 0; j < 4; ++j) f[j] = double(features.at(i, j));
    const auto x = encode_composite(f, model.visual, EncodeMode::Infer);
    const auto [xa, xo] = extract_primitives(x, model.visual);
    for (std::size_t c = 0; c < 3; ++c) {
      const auto [ca, co] = pair_concept_features(u.candidates()[c], u, model.concepts, MessagePassing::Blocked);
      double da = 0, dob = 0;
      for (std::size_t j = 0; j < 6; ++j) {
        da += (xa[j] - ca[j]) * (xa[j] - ca[j]);
        dob += (xo[j] - co[j]) * (xo[j] - co[j]);
      }
      EXPECT_NEAR(m.at(i, c), -std::sqrt(da) - std::sqrt(dob), 1e-12);
    }
  }
  EXPECT_EQ(m.labels, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(m.unseen_column, (std::vector<std::uint8_t>{0, 1, 0}));
}

TEST(Score, FeatureDimensionMismatchIsRejected) {
  const PairUniverse u({"a", "b"}, {"x", "y"}, {{0, 0}, {1, 1}}, {{0, 1}});
  Rng rng(0);
  const Model<double> model = Model<double>::init(ModelConfig{6, 4, false, true, true}, 2, 2, rng);
  const std::vector<Pair> labels = {{0, 0}};
  EXPECT_THROW(score_all(model, u, Tensor<float>({1, 5}), labels), ShapeError);
  const std::vector<Pair> bad = {{1, 0}};
  EXPECT_THROW(score_all(model, u, Tensor<float>({1, 4}), bad), Error);
}

// --------------------------------------------------------------- prediction

TEST(Predict, FlipsToUnseenAboveGap) {
  const std::vector<double> row = {0.9, 0.5, 0.2};
  const std::vector<std::uint8_t> unseen = {0, 1, 0};
  EXPECT_EQ(predict_topk(row, unseen, 0.0, 1)[0], 0u);
  EXPECT_EQ(predict_topk(row, unseen, 0.39, 1)[0], 0u);
  // Tie at exactly 0.4 goes to the lower id.
  EXPECT_EQ(predict_topk(row, unseen, 0.4, 1)[0], 0u);
  EXPECT_EQ(predict_topk(row, unseen, 0.41, 1)[0], 1u);
  EXPECT_EQ(predict_topk(row, unseen, 0.5, 1)[0], 1u);
  EXPECT_EQ(predict_topk(row, unseen, kInf, 1)[0], 1u);
  EXPECT_EQ(predict_topk(row, unseen, 0.0, 3), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(predict_topk(row, unseen, 0.0, 10).size(), 3u);
}

TEST(Predict, TopKSetsAreNested) {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 50; ++trial) {
    const ScoreMatrix m = test::random_matrix(gen, 6, 6, trial % 2 == 0);
    for (double bias : {-1.0, 0.0, 0.7}) {
      const auto r = m.row(0);
      const auto t1 = predict_topk(r, m.unseen_column, bias, 1);
      const auto t2 = predict_topk(r, m.unseen_column, bias, 2);
      const auto t3 = predict_topk(r, m.unseen_column, bias, 3);
      EXPECT_TRUE(std::equal(t1.begin(), t1.end(), t2.begin()));
      EXPECT_TRUE(std::equal(t2.begin(), t2.end(), t3.begin()));
    }
  }
}

TEST(Predict, ShiftingARowChangesNothing) {
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 50; ++trial) {
    const ScoreMatrix m = test::random_matrix(gen);
    std::vector<double> shifted(m.row(0).begin(), m.row(0).end());
    for (double& v : shifted) v += 3.0;
    for (double bias : {-0.5, 0.0, 0.25})
      EXPECT_EQ(predict_topk(m.row(0), m.unseen_column, bias, 2), predict_topk(shifted, m.unseen_column, bias, 2));
  }
}

// -------------------------------------------------------------------- sweep

TEST(Sweep, PerfectScoresGiveFullAccuracyAtZero) {
  const ScoreMatrix m = matrix(2, 2, {0, -5, -5, 0}, {0, 1}, {0, 1});
  const EvalCurve c = calibration_sweep(m, 1);
  const CurvePoint p = c.at(0.0);
  EXPECT_EQ(p.seen, 1.0);
  EXPECT_EQ(p.unseen, 1.0);
  EXPECT_EQ(auc(c), 1.0);
}

TEST(Sweep, EmptySideIsNamed) {
  const ScoreMatrix only_seen = matrix(1, 2, {0, 1}, {0}, {0, 1});
  try {
    calibration_sweep(only_seen, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("unseen"), std::string::npos);
  }
  const ScoreMatrix only_unseen = matrix(1, 2, {0, 1}, {1}, {0, 1});
  try {
    calibration_sweep(only_unseen, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("no images with a seen"), std::string::npos);
  }
}

TEST(Sweep, FourImageToyMatchesDenseOracle) {
  // Columns: 0 seen, 1 unseen, 2 seen, 3 unseen.
  const ScoreMatrix m = matrix(4, 4,
                               {0.9, 0.5, 0.2, 0.1,   //
                                0.3, 0.8, 0.6, 0.0,   //
                                -0.2, 0.4, 0.1, 0.7,  //
                                0.5, 0.45, 0.52, 0.3},
                               {0, 1, 3, 2}, {0, 1, 0, 1});
  for (std::size_t k : {1u, 2u, 3u}) {
    const EvalCurve c = calibration_sweep(m, k);
    for (double b : test::dense_grid(m)) {
      const CurvePoint got = c.at(b), want = test::oracle_point(m, b, k);
      ASSERT_EQ(got.seen, want.seen) << "bias " << b;
      ASSERT_EQ(got.unseen, want.unseen) << "bias " << b;
    }
    const auto oracle = test::oracle_curve(m, k);
    EXPECT_NEAR(auc(c), oracle.auc, 1e-12);
  }
}

TEST(Sweep, RandomMatricesMatchDenseOracle) {
  std::mt19937_64 gen(2025);
  for (int trial = 0; trial < 40; ++trial) {
    const ScoreMatrix m = test::random_matrix(gen, 6, 6, trial % 3 == 0);
    for (std::size_t k : {1u, 2u, 3u}) {
      const EvalCurve c = calibration_sweep(m, k);
      const auto& bp = c.breakpoints();
      for (double b : test::dense_grid(m, 2000)) {
        if (std::binary_search(bp.begin(), bp.end(), b)) continue;
        const CurvePoint got = c.at(b), want = test::oracle_point(m, b, k);
        ASSERT_EQ(got.seen, want.seen);
        ASSERT_EQ(got.unseen, want.unseen);
      }
      const auto oracle = test::oracle_curve(m, k);
      const SplitMetrics s = curve_metrics(c);
      EXPECT_NEAR(s.auc, oracle.auc, 1e-9);
      EXPECT_EQ(s.best_seen, oracle.best_seen);
      EXPECT_EQ(s.best_unseen, oracle.best_unseen);
      EXPECT_NEAR(s.ch_mean, oracle.ch_mean, 1e-15);
    }
  }
}

TEST(Sweep, CurveIsMonotoneWithZeroEndpoints) {
  std::mt19937_64 gen(77);
  for (int trial = 0; trial < 50; ++trial) {
    const ScoreMatrix m = test::random_matrix(gen);
    const EvalCurve c = calibration_sweep(m, 1);
    EXPECT_EQ(c.points.front().bias, -kInf);
    EXPECT_EQ(c.points.back().bias, kInf);
    EXPECT_EQ(c.points.front().unseen, 0.0);
    EXPECT_EQ(c.points.back().seen, 0.0);
    for (std::size_t i = 0; i + 1 < c.points.size(); ++i) {
      EXPECT_LT(c.points[i].bias, c.points[i + 1].bias);
      EXPECT_GE(c.points[i].seen, c.points[i + 1].seen);
      EXPECT_LE(c.points[i].unseen, c.points[i + 1].unseen);
    }
  }
}

TEST(Sweep, KAtLeastCandidateCountIsAlwaysCorrect) {
  std::mt19937_64 gen(13);
  for (int trial = 0; trial < 20; ++trial) {
    const ScoreMatrix m = test::random_matrix(gen);
    const EvalCurve c = calibration_sweep(m, m.cols);
    for (const CurvePoint& p : c.points) {
      EXPECT_EQ(p.seen, 1.0);
      EXPECT_EQ(p.unseen, 1.0);
    }
  }
}

TEST(Sweep, ShiftingEveryColumnKeepsTheCurve) {
  std::mt19937_64 gen(31);
  for (int trial = 0; trial < 20; ++trial) {
    ScoreMatrix m = test::random_matrix(gen);
    const EvalCurve a = calibration_sweep(m, 1);
    for (double& v : m.scores) v += 0.25;  // exact in binary
    const EvalCurve b = calibration_sweep(m, 1);
    ASSERT_EQ(a.points.size(), b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i) {
      EXPECT_EQ(a.points[i].seen, b.points[i].seen);
      EXPECT_EQ(a.points[i].unseen, b.points[i].unseen);
    }
  }
}

// ---------------------------------------------------------------- metrics

TEST(Metrics, ToyCurveTrapezoid) {
  const std::vector<CurvePoint> pts = {{0, 0.0, 0.8}, {0, 0.5, 0.5}, {0, 0.9, 0.0}};
  // 0.5 * (0.8 + 0.5) / 2 + 0.4 * (0.5 + 0) / 2 = 0.325 + 0.1
  EXPECT_NEAR(auc(pts), 0.425, 1e-15);
  // Dense oracle: integrate the piecewise-linear interpolation numerically.
  double area = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double x = (i + 0.5) * 0.9 / n;
    const double y = x < 0.5 ? 0.8 - 0.6 * x : 0.5 - 1.25 * (x - 0.5);
    area += y * 0.9 / n;
  }
  EXPECT_NEAR(auc(pts), area, 1e-9);
}

TEST(Metrics, DuplicatedPointsKeepTheArea) {
  const std::vector<CurvePoint> pts = {{0, 0.0, 0.8}, {0, 0.5, 0.5}, {0, 0.9, 0.0}};
  const std::vector<CurvePoint> dup = {{0, 0.0, 0.8}, {0, 0.5, 0.5}, {0, 0.5, 0.5}, {0, 0.9, 0.0}, {0, 0.9, 0.0}};
  EXPECT_EQ(auc(pts), auc(dup));
}

TEST(Metrics, UnitSquareAndZeroArea) {
  EXPECT_EQ(auc(std::vector<CurvePoint>{{0, 0, 1}, {0, 1, 1}, {0, 1, 0}}), 1.0);
  EXPECT_EQ(auc(std::vector<CurvePoint>{{0, 0, 0}, {0, 0.7, 0}}), 0.0);
}

TEST(Metrics, HarmonicMeanOfToyCurve) {
  EvalCurve c;
  c.points = {{-kInf, 0.0, 0.8}, {0, 0.5, 0.5}, {kInf, 0.9, 0.0}};
  const SplitMetrics s = curve_metrics(c);
  EXPECT_EQ(s.ch_mean, 0.5);
  EXPECT_EQ(s.best_seen, 0.9);
  EXPECT_EQ(s.best_unseen, 0.8);
}

TEST(Metrics, ReportIsPercentJson) {
  EvalReport r;
  r.split = Split::Val;
  r.ks = {1};
  r.metrics = {SplitMetrics{0.425, 0.9, 0.8, 0.5}};
  EvalCurve c;
  c.points = {{-kInf, 0.0, 0.8}, {kInf, 0.9, 0.0}};
  r.curves = {c};
  const auto j = nlohmann::json::parse(report_json(std::span<const EvalReport>(&r, 1)));
  EXPECT_NEAR(j["1"]["val"]["auc"].get<double>(), 42.5, 1e-12);
  EXPECT_NEAR(j["1"]["val"]["ch_mean"].get<double>(), 50.0, 1e-12);
  const std::string csv = curves_csv(std::span<const EvalReport>(&r, 1));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "split,k,bias,seen,unseen");
}

// --------------------------------------------------------------- end to end

TEST(Evaluate, RepeatableWithNestedTopK) {
  const Dataset data = test::tiny_synthetic(1, 4, 4, 16, 0.25, 8);
  Rng rng(0);
  const Model<double> model = Model<double>::init(ModelConfig{16, 16, false, true, true}, 4, 4, rng);
  const std::size_t ks[] = {1, 2, 3};
  const EvalReport a = evaluate(model, data, Split::Test, ks);
  const EvalReport b = evaluate(model, data, Split::Test, ks);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.metrics[i].auc, b.metrics[i].auc);
    EXPECT_GE(b.metrics[i].best_unseen, i == 0 ? 0.0 : b.metrics[i - 1].best_unseen);
  }
}

}  // namespace
}  // namespace bmp
