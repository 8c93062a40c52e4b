// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "bmpnet/checkpoint.hpp"
#include "bmpnet/commands.hpp"
#include "bmpnet/concept_graph.hpp"
#include "bmpnet/evaluation.hpp"
#include "bmpnet/run_config.hpp"
#include "bmpnet/runtime.hpp"
#include "bmpnet/training.hpp"
#include "bmpnet/visual_encoder.hpp"
#include "eval_oracle.hpp"
#include "op_cases.hpp"
#include "support.hpp"

namespace bmp {
namespace {

using Clock = std::chrono::steady_clock;
using nlohmann::json;

// Collects failed checks; a criterion passes when none failed.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 8) failures_.push_back(what);
    failed_ |= !ok;
  }
  void note(const std::string& s) { notes_.push_back(s); }
  bool ok() const { return !failed_; }
  std::string summary() const {
    std::string out;
    for (const auto& s : notes_) out += (out.empty() ? "" : "; ") + s;
    for (const auto& s : failures_) out += (out.empty() ? "" : "; ") + ("failed: " + s);
    return out;
  }

 private:
  bool failed_ = false;
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// ------------------------------------------------------------- criterion 1

void gradients(Checks& c) {
  double worst_op = 0;
  for (const test::OpCase& oc : test::op_cases()) {
    double worst = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 gen(seed);
      ad::Graph<double> g;
      ad::Var loss;
      for (ad::Var leaf : oc.build(g, gen, loss)) worst = std::max(worst, ad::finite_difference_check(g, loss, leaf, 1e-5));
    }
    c.expect(worst < 1e-4, std::string(oc.name) + " error " + fmt(worst));
    worst_op = std::max(worst_op, worst);
  }

  const Dataset data = test::tiny_synthetic(3, 3, 3, 16);
  double worst_loss = 0;
  std::size_t checked = 0;
  for (bool conditional : {false, true}) {
    for (BranchBlock block : {BranchBlock{}, BranchBlock{true, false}, BranchBlock{false, true}}) {
      ModelConfig mc{16, 16, conditional, true, true};
      TrainConfig tc;
      tc.batch_size = 6;
      Rng rng(7);
      const Model<double> model = Model<double>::init(mc, 3, 3, rng);
      const auto train_images = data.images_in(Split::Train);
      const TripletBatch batch = TripletSampler(data.universe, train_images).sample(tc.batch_size, rng);
      const Tensor<double> noise = rng.normal<double>({batch_images(batch).size(), mc.dim});
      ad::Graph<double> g;
      const auto loss = build_combined_loss(g, model, data.universe, data.features, batch, block, noise, tc);
      model.for_each([&](const std::string& name, const Tensor<double>& t) {
        const ad::Var v = g.find_param(t);
        if (!v.valid()) {
          // Only a blocked branch's classifier may be missing from the graph.
          c.expect((block.attr && name.starts_with("aux.attr")) || (block.obj && name.starts_with("aux.obj")),
                   name + " missing from loss graph");
          return;
        }
        const double err = ad::finite_difference_check(g, loss.total, v, 1e-6);
        worst_loss = std::max(worst_loss, err);
        ++checked;
        c.expect(err < 1e-4, name + " error " + fmt(err));
      });
    }
  }
  c.note(std::to_string(test::op_cases().size()) + " ops worst " + fmt(worst_op, 2) + ", " +
         std::to_string(checked) + " loss parameter checks worst " + fmt(worst_loss, 2));
}

// ------------------------------------------------------------- criterion 2

void blocking_fixture(Checks& c) {
  const PairUniverse u = test::mini_world();  // attributes 1,2,3 -> 0,1,2; objects 4,5 -> 0,1
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    ConceptParams<double> p = ConceptParams<double>::init(3, 2, 8, rng);
    std::mt19937_64 gen(seed);
    for (Tensor<double>* t : {&p.keys, &p.queries}) *t = test::uniform(t->shape(), gen, -1, 1);

    // Attribute 1 on input <1,4>.
    const auto a = attention_blocked(p, u, ConceptKind::Attribute, 0, 0);
    const auto an = attention_naive(p, u, ConceptKind::Attribute, 0);
    c.expect(a.beta[3] == 0.0 && a.beta[4] == 0.0, "attribute query: object half not zero");
    for (std::size_t i = 0; i < 3; ++i) c.expect(a.beta[i] == an.beta[i], "attribute query: same-type half differs");

    // Object 4 on input <1,4>.
    const auto o = attention_blocked(p, u, ConceptKind::Object, 0, 0);
    const auto on = attention_naive(p, u, ConceptKind::Object, 0);
    c.expect(o.beta[0] == 0.0 && o.beta[2] == 0.0, "object query: attributes 1 or 3 not zero");
    c.expect(o.beta[1] == 1.0, "object query: attribute 2 mass " + fmt(o.beta[1], 17));
    for (std::size_t i = 3; i < 5; ++i) c.expect(o.beta[i] == on.beta[i], "object query: same-type half differs");

    // The graph path used in training and inference agrees bit for bit.
    ad::Graph<double> g;
    ConceptGraph<double> cg(g, p, u);
    const std::uint32_t id0[] = {0};
    const Tensor<double> ga = g.value(cg.attention(ConceptKind::Attribute, id0, a.blocked));
    const Tensor<double> go = g.value(cg.attention(ConceptKind::Object, id0, o.blocked));
    for (std::size_t i = 0; i < 5; ++i) {
      c.expect(ga[i] == a.beta[i], "graph attribute attention differs");
      c.expect(go[i] == o.beta[i], "graph object attention differs");
    }
  }
  c.note("10 random parameter draws");
}

// ------------------------------------------------------------- criterion 3

Model<double> trained_small_model(const Dataset& data, double tau) {
  TrainConfig tc;
  tc.batch_size = 32;
  tc.epochs = 3;
  tc.seed = 5;
  tc.tau = tau;
  tc.learning_rate = 3e-3;
  tc.precision = Precision::Float64;
  return train<double>(data, ModelConfig{16, 16, false, true, true}, tc).best.model;
}

void consistency(Checks& c) {
  const Dataset data = test::tiny_synthetic(9, 4, 4, 16, 0.25, 10);
  const Model<double> model = trained_small_model(data, 0.05);
  const std::size_t ks[] = {1, 2, 3};
  const EvalReport report = evaluate(model, data, Split::Test, ks);
  const std::string reference = report_json(std::span(&report, 1)) + curves_csv(std::span(&report, 1));

  // (a) The same evaluation with message passing that cannot reach the naive path.
  ad::Graph<double> g;
  ConceptGraph<double> cg(g, model.concepts, data.universe, /*allow_naive=*/false);
  const auto& cands = data.universe.candidates();
  const Tensor<double> ca = g.value(cg.blocked_features(ConceptKind::Attribute, cands));
  const Tensor<double> co = g.value(cg.blocked_features(ConceptKind::Object, cands));
  c.expect(cg.naive_calls() == 0, "naive path used");

  const auto [va_ref, vo_ref] = candidate_features(model, data.universe);
  c.expect(ca == va_ref && co == vo_ref, "candidate features differ without the naive path");

  // Standalone per-pair features agree numerically as well.
  double worst = 0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const auto [a, o] = pair_concept_features(cands[i], data.universe, model.concepts, MessagePassing::Blocked);
    for (std::size_t j = 0; j < a.size(); ++j) {
      worst = std::max(worst, std::abs(a[j] - ca.at(i, j)));
      worst = std::max(worst, std::abs(o[j] - co.at(i, j)));
    }
  }
  c.expect(worst < 1e-12, "standalone blocked features differ by " + fmt(worst));

  const auto test_images = data.images_in(Split::Test);
  const Tensor<float> f = data.features_of(test_images);
  Tensor<double> fd(f.shape());
  std::copy(f.data().begin(), f.data().end(), fd.values().begin());
  const Tensor<double> x = encode_composite(fd, model.visual, EncodeMode::Infer);
  const auto [xa, xo] = extract_primitives(x, model.visual);
  std::vector<std::size_t> labels;
  std::vector<std::uint8_t> unseen;
  for (const ImageRecord& r : test_images) labels.push_back(*data.universe.candidate_index(r.pair));
  for (Pair p : cands) unseen.push_back(data.universe.is_unseen(p));
  const ScoreMatrix m = score_features(xa, xo, ca, co, labels, unseen);
  EvalReport manual{Split::Test, {1, 2, 3}, {}, {}};
  for (std::size_t k : ks) {
    manual.curves.push_back(calibration_sweep(m, k));
    manual.metrics.push_back(curve_metrics(manual.curves.back()));
  }
  c.expect(report_json(std::span(&manual, 1)) + curves_csv(std::span(&manual, 1)) == reference,
           "report differs without the naive path");

  // (b) Training-time tau does not enter inference: the same parameters saved
  // under different tau values evaluate identically.
  test::TempDir dir("tau");
  for (double tau : {0.0, 0.2, 0.45}) {
    ModelState<double> state;
    state.model = model;
    state.model_config = model.config;
    state.train_config.tau = tau;
    state.train_config.precision = Precision::Float64;
    state.optimizer = AdamState<double>::zeros_like(model);
    save_checkpoint(dir / "m.bin", state, data.universe);
    const auto loaded = load_checkpoint<double>(dir / "m.bin", data.universe);
    c.expect(loaded.train_config.tau == tau, "tau not stored");
    const EvalReport r = evaluate(loaded.model, data, Split::Test, ks);
    c.expect(report_json(std::span(&r, 1)) + curves_csv(std::span(&r, 1)) == reference,
             "report depends on tau " + fmt(tau));
  }

  // Models trained with different tau differ, but each evaluation only reads
  // parameters, so evaluating twice is identical.
  const Model<double> other = trained_small_model(data, 0.3);
  const EvalReport r1 = evaluate(other, data, Split::Test, ks), r2 = evaluate(other, data, Split::Test, ks);
  c.expect(report_json(std::span(&r1, 1)) == report_json(std::span(&r2, 1)), "evaluation not repeatable");
  c.note("byte-identical reports; standalone features within " + fmt(worst, 2));
}

// ------------------------------------------------------------- criterion 4

void evaluation_oracle(Checks& c) {
  std::mt19937_64 gen(31337);
  const double inf = std::numeric_limits<double>::infinity();
  std::size_t matrices = 0, points = 0;
  double worst_auc = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const ScoreMatrix m = test::random_matrix(gen, 6, 6, trial % 3 == 0);
    ++matrices;
    for (std::size_t k : {1u, 2u, 3u}) {
      const EvalCurve curve = calibration_sweep(m, k);
      const auto& bp = curve.breakpoints();
      for (double b : test::dense_grid(m)) {
        if (std::binary_search(bp.begin(), bp.end(), b)) continue;
        const CurvePoint got = curve.at(b), want = test::oracle_point(m, b, k);
        c.expect(got.seen == want.seen && got.unseen == want.unseen, "accuracy mismatch at bias " + fmt(b));
        ++points;
      }
      const auto oracle = test::oracle_curve(m, k);
      const SplitMetrics s = curve_metrics(curve);
      worst_auc = std::max(worst_auc, std::abs(s.auc - oracle.auc));
      c.expect(std::abs(s.auc - oracle.auc) <= 1e-9, "AUC " + fmt(s.auc) + " vs " + fmt(oracle.auc));
      c.expect(s.best_seen == oracle.best_seen, "best seen");
      c.expect(s.best_unseen == oracle.best_unseen, "best unseen");
      c.expect(std::abs(s.ch_mean - oracle.ch_mean) <= 1e-15, "cH-Mean");
      if (k == 1) {
        c.expect(curve.at(inf).seen == 0.0, "seen accuracy not 0 at +inf");
        c.expect(curve.at(-inf).unseen == 0.0, "unseen accuracy not 0 at -inf");
        c.expect(curve.points.front().unseen == 0.0 && curve.points.back().seen == 0.0, "curve endpoints");
      }
    }
  }
  c.note(std::to_string(matrices) + " matrices x k=1,2,3, " + std::to_string(points) +
         " grid points exact, AUC worst " + fmt(worst_auc, 2));
}

// ------------------------------------------------------------- criterion 5

struct RunOutcome {
  double auc = 0;
  double unseen_top1 = 0;       // best unseen accuracy over the bias sweep
  double unseen_top1_zero = 0;  // at bias 0
  double seconds = 0;
};

RunOutcome desk_run(const Dataset& data, std::uint64_t seed, bool ablate) {
  const auto start = Clock::now();
  RunConfig cfg;
  if (ablate) cfg.apply_ablation("no-blocking");
  cfg.model.input_dim = data.feature_dim();
  cfg.train.seed = seed;
  const auto result = train<float>(data, cfg.model, cfg.train);
  const std::size_t k1[] = {1};
  const EvalReport r = evaluate(result.best.model, data, Split::Test, k1);
  RunOutcome out;
  out.auc = r.metrics[0].auc;
  out.unseen_top1 = r.metrics[0].best_unseen;
  out.unseen_top1_zero = r.curves[0].at(0.0).unseen;
  out.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

void desk_scale(Checks& c) {
  const auto start = Clock::now();
  const Dataset data = generate_synthetic(SyntheticWorldConfig{});
  const double chance = 1.0 / double(data.universe.candidates().size());

  constexpr std::size_t kSeeds = 5;
  std::vector<RunOutcome> full(kSeeds), nob(kSeeds);
  std::vector<std::function<void()>> jobs;
  for (std::size_t s = 0; s < kSeeds; ++s) {
    jobs.push_back([&, s] { full[s] = desk_run(data, s, false); });
    jobs.push_back([&, s] { nob[s] = desk_run(data, s, true); });
  }
  std::mutex mu;
  std::size_t next = 0;
  std::vector<std::thread> workers;
  const std::size_t n = std::max<std::size_t>(1, std::min<std::size_t>(jobs.size(), std::thread::hardware_concurrency()));
  for (std::size_t w = 0; w < n; ++w) {
    workers.emplace_back([&] {
      for (;;) {
        std::size_t j;
        {
          std::lock_guard lock(mu);
          if (next == jobs.size()) return;
          j = next++;
        }
        jobs[j]();
      }
    });
  }
  for (auto& t : workers) t.join();

  std::vector<double> aucs, unseen, unseen_zero;
  std::size_t wins = 0;
  std::string per_seed;
  for (std::size_t s = 0; s < kSeeds; ++s) {
    aucs.push_back(full[s].auc);
    unseen.push_back(full[s].unseen_top1);
    unseen_zero.push_back(full[s].unseen_top1_zero);
    wins += full[s].auc >= nob[s].auc;
    per_seed += (s ? " " : "") + fmt(100 * full[s].auc) + "/" + fmt(100 * nob[s].auc);
  }
  const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
  c.expect(median(unseen) >= 5 * chance, "median unseen top-1 " + fmt(median(unseen)) + " < 5x chance");
  c.expect(median(aucs) > 0, "median test AUC is 0");
  c.expect(wins >= 3, "full >= no-blocking in " + std::to_string(wins) + " of 5 seeds");
  c.expect(seconds < 600, "runtime " + fmt(seconds) + " s over 600 s on " + std::to_string(n) + " worker(s)");
  c.note("median unseen top-1 " + fmt(100 * median(unseen)) + "% (at bias 0: " + fmt(100 * median(unseen_zero)) +
         "%), 5x chance " + fmt(500 * chance) + "%, median AUC " + fmt(100 * median(aucs)) + "%, AUC full/no-blocking " +
         per_seed + ", full >= no-blocking " + std::to_string(wins) + "/5, " + fmt(seconds) + " s on " +
         std::to_string(n) + " worker(s)");
}

// ------------------------------------------------------------- criterion 6

void real_data_path(Checks& c) {
  // Stand-in for user-supplied data: named vocabulary, 512-d features as
  // CSV, train/val/test pair splits.
  test::TempDir dir("real");
  SyntheticWorldConfig sc;
  sc.num_attributes = 4;
  sc.num_objects = 5;
  sc.feature_dim = 512;
  sc.images_per_pair = 10;
  sc.seed = 12;
  const Dataset world = generate_synthetic(sc);
  {
    std::ofstream csv(dir / "features.csv");
    csv.precision(9);
    for (std::size_t i = 0; i < world.features.dim(0); ++i) {
      for (std::size_t j = 0; j < 512; ++j) csv << (j ? "," : "") << world.features.at(i, j);
      csv << '\n';
    }
  }
  std::ostringstream log;
  cli::run_convert(dir / "features.csv", dir / "features.bmpf", log);
  save_dataset(world, dir / "manifest.json", dir / "unused.bmpf");
  c.expect(slurp(dir / "features.bmpf") == slurp(dir / "unused.bmpf"), "CSV conversion changed the features");

  const json cfg = {{"dataset", {{"manifest", "manifest.json"}, {"features", "features.bmpf"}}},
                    {"output_dir", "run"},
                    {"model", {{"dim", 32}}},
                    {"train", {{"epochs", 2}, {"batch_size", 64}, {"seed", 1}}}};
  std::ofstream(dir / "run.json") << cfg.dump(2);
  const RunConfig rc = cli::resolve_run_config(dir / "run.json", {});
  const auto summary = cli::run_train(rc, log);
  cli::run_eval(rc, std::nullopt, Split::Val, {1, 2, 3}, log);
  cli::run_eval(rc, std::nullopt, Split::Test, {1, 2, 3}, log);

  c.expect(json::parse(slurp(dir / "run/resolved_config.json"))["model"]["input_dim"] == 512, "input_dim not taken from data");
  std::size_t epochs = 0;
  std::istringstream lines(slurp(dir / "run/metrics.jsonl"));
  for (std::string line; std::getline(lines, line); ++epochs) {
    const json j = json::parse(line);
    for (const char* key : {"epoch", "l_v", "l_c", "l_aux", "l_r", "val_auc"}) c.expect(j.contains(key), std::string("metrics key ") + key);
  }
  c.expect(epochs == 2, "metrics lines " + std::to_string(epochs));
  for (const auto& [file, split] : {std::pair{"report.json", "test"}, {"report_test.json", "test"}, {"report_val.json", "val"}}) {
    const json r = json::parse(slurp(dir / "run" / file));
    std::set<std::string> ks;
    for (const auto& [k, v] : r.items()) {
      ks.insert(k);
      c.expect(v.size() == 1 && v.contains(split), std::string(file) + " split key");
      std::set<std::string> keys;
      for (const auto& [m, x] : v[split].items()) {
        keys.insert(m);
        c.expect(x.is_number() && x.get<double>() >= 0 && x.get<double>() <= 100, std::string(file) + " value range");
      }
      c.expect(keys == std::set<std::string>{"auc", "best_seen", "best_unseen", "ch_mean"}, std::string(file) + " metric keys");
    }
    c.expect(ks == std::set<std::string>{"1", "2", "3"}, std::string(file) + " k keys");
  }
  c.expect(slurp(dir / "run/report.json") == slurp(dir / "run/report_test.json"), "eval of best checkpoint differs from train report");
  const std::string curves = slurp(dir / "run/curves_val.csv");
  c.expect(curves.starts_with("split,k,bias,seen,unseen\n"), "curves header");
  c.note("manifest + 512-d CSV features -> train, eval val/test; report schema checked");
  (void)summary;
}

// ------------------------------------------------------------- criterion 7

void determinism(Checks& c) {
  const Dataset data = test::tiny_synthetic(2, 4, 4, 16, 0.25, 10);
  TrainConfig tc;
  tc.batch_size = 16;
  tc.epochs = 4;
  tc.seed = 11;
  tc.learning_rate = 3e-3;
  const ModelConfig mc{16, 16, false, true, true};
  for (Precision p : {Precision::Float32, Precision::Float64}) {
    tc.precision = p;
    auto history = [&] {
      std::vector<double> out;
      auto push = [&](const auto& r) {
        for (const EpochRecord& e : r.history) out.insert(out.end(), {e.l_v, e.l_c, e.l_aux, e.l_r, e.val_auc});
      };
      if (p == Precision::Float32) push(train<float>(data, mc, tc));
      else push(train<double>(data, mc, tc));
      return out;
    };
    const auto a = history(), b = history();
    c.expect(a.size() == 20 && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0, "metrics differ across runs");
  }

  // Same through the command layer: identical metrics.jsonl bytes.
  test::TempDir dir("det");
  const json cfg = {{"dataset", {{"synthetic", {{"num_attributes", 4}, {"num_objects", 4}, {"feature_dim", 16}, {"seed", 2}}}}},
                    {"model", {{"dim", 16}}},
                    {"train", {{"epochs", 3}, {"batch_size", 32}, {"seed", 4}}}};
  std::ofstream(dir / "run.json") << cfg.dump();
  std::ostringstream log;
  for (const char* out : {"a", "b"}) {
    cli::TrainOverrides o;
    o.output_dir = dir / out;
    cli::run_train(cli::resolve_run_config(dir / "run.json", o), log);
  }
  c.expect(slurp(dir / "a/metrics.jsonl") == slurp(dir / "b/metrics.jsonl"), "metrics.jsonl differs");
  c.expect(slurp(dir / "a/report.json") == slurp(dir / "b/report.json"), "report.json differs");

  // 10 steps = 5 steps, checkpoint round trip, 5 steps.
  tc.precision = Precision::Float64;
  Trainer<double> straight(data, mc, tc);
  std::vector<double> losses;
  for (int i = 0; i < 10; ++i) losses.push_back(straight.step().losses.total);
  Trainer<double> first(data, mc, tc);
  for (int i = 0; i < 5; ++i) first.step();
  save_checkpoint(dir / "half.bin", first.state(), data.universe);
  Trainer<double> resumed(data, load_checkpoint<double>(dir / "half.bin", data.universe));
  for (int i = 5; i < 10; ++i) c.expect(resumed.step().losses.total == losses[i], "loss differs after resume");
  bool same = true;
  std::vector<const Tensor<double>*> pa, pb;
  resumed.model().for_each([&](const std::string&, const Tensor<double>& t) { pa.push_back(&t); });
  straight.model().for_each([&](const std::string&, const Tensor<double>& t) { pb.push_back(&t); });
  for (std::size_t i = 0; i < pa.size(); ++i) same &= *pa[i] == *pb[i];
  c.expect(same, "parameters differ after resume");
  c.expect(serialize_checkpoint(resumed.state(), data.universe) == serialize_checkpoint(straight.state(), data.universe),
           "full state differs after resume");
  c.note("float32/float64 histories and CLI outputs bit-identical; resume exact");
}

// ------------------------------------------------------------- criterion 8

void loss_units(Checks& c) {
  const auto r = Tensor<double>::vector({0.3, -1, 2}), p = Tensor<double>::vector({2, 1, -0.5});
  const double t = triplet_term(p, p, r, 0.5);
  const double expected = std::log(1 + std::exp(0.5));
  c.expect(std::abs(t - expected) <= 1e-9, "triplet " + fmt(t, 12));
  ad::Graph<double> g;
  const double tg = g.value(triplet_term(g, g.constant(p), g.constant(p), g.constant(r), 0.5))[0];
  c.expect(std::abs(tg - expected) <= 1e-9, "graph triplet " + fmt(tg, 12));

  double worst = 0;
  for (auto [na, no] : {std::pair<std::size_t, std::size_t>{3, 3}, {8, 8}, {5, 7}, {115, 245}}) {
    Rng rng(1);
    const Model<double> init = Model<double>::init(ModelConfig{8, 8, false, true, true}, na, no, rng);
    AuxClassifiers<double> cls = init.classifiers;
    for (Linear<double>* l : {&cls.attr, &cls.obj}) {
      l->weight = Tensor<double>(l->weight.shape(), 0.0);
      l->bias = Tensor<double>(l->bias.shape(), 0.0);
    }
    std::mt19937_64 gen(na);
    ad::Graph<double> ga;
    const ad::Var xa = ga.constant(test::uniform({4, 8}, gen)), xo = ga.constant(test::uniform({4, 8}, gen));
    const double v = ga.value(aux_loss(ga, cls, xa, xo, {0, na - 1, 1, 2}, {no - 1, 0, 2, 1}))[0];
    const double want = std::log(double(na)) + std::log(double(no));
    worst = std::max(worst, std::abs(v - want));
    c.expect(std::abs(v - want) <= 1e-9, "aux " + fmt(v, 12) + " vs " + fmt(want, 12));
  }
  c.note("triplet " + fmt(t, 10) + " (log(1+e^0.5) " + fmt(expected, 10) + "), aux worst error " + fmt(worst, 2));
}

struct Criterion {
  int id;
  const char* name;
  void (*run)(Checks&);
};

}  // namespace
}  // namespace bmp

int main(int argc, char** argv) {
  using namespace bmp;
  tune_allocator();
  const Criterion criteria[] = {
      {1, "gradient correctness", gradients},
      {2, "blocking golden fixture", blocking_fixture},
      {3, "inference consistency", consistency},
      {4, "evaluation protocol oracle", evaluation_oracle},
      {5, "compositional generalization at desk scale", desk_scale},
      {6, "real-data path and report schema", real_data_path},
      {7, "determinism and resume", determinism},
      {8, "loss-term unit values", loss_units},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const Criterion& cr : criteria) {
    if (!only.empty() && !only.contains(cr.id)) continue;
    Checks checks;
    const auto start = Clock::now();
    try {
      cr.run(checks);
    } catch (const std::exception& e) {
      checks.expect(false, std::string("exception: ") + e.what());
    }
    const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
    if (cr.id == 1) checks.expect(seconds < 60, "runtime over 1 minute");
    std::printf("%s [%d] %s (%.1f s): %s\n", checks.ok() ? "PASS" : "FAIL", cr.id, cr.name, seconds,
                checks.summary().c_str());
    std::fflush(stdout);
    failed += !checks.ok();
  }
  return failed == 0 ? 0 : 1;
}
