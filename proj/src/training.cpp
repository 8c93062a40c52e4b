#include "bmpnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>

#include "bmpnet/checkpoint.hpp"
#include "bmpnet/error.hpp"
#include "bmpnet/evaluation.hpp"
#include "json.hpp"

namespace bmp {

TrainConfig TrainConfig::ut_zappos() { return TrainConfig{}; }

TrainConfig TrainConfig::mit_states() {
  TrainConfig c;
  c.lambda_v = 20;
  c.lambda_c = 5;
  c.lambda_a = 10;
  c.lambda_r = 5;
  return c;
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* field, const std::string& rule) {
    if (!ok) throw ConfigError(std::string("train.") + field + ": " + rule);
  };
  require(std::isfinite(margin) && margin >= 0, "margin", "must be a finite non-negative number");
  require(std::isfinite(tau) && tau >= 0 && tau < 0.5, "tau", "must lie in [0, 0.5)");
  require(std::isfinite(lambda_v) && lambda_v >= 0, "lambda_v", "must be a finite non-negative number");
  require(std::isfinite(lambda_c) && lambda_c >= 0, "lambda_c", "must be a finite non-negative number");
  require(std::isfinite(lambda_a) && lambda_a >= 0, "lambda_a", "must be a finite non-negative number");
  require(std::isfinite(lambda_r) && lambda_r >= 0, "lambda_r", "must be a finite non-negative number");
  require(batch_size > 0, "batch_size", "must be positive");
  require(std::isfinite(learning_rate) && learning_rate > 0, "learning_rate", "must be positive");
}

// ------------------------------------------------------------------ sampling

TripletSampler::TripletSampler(const PairUniverse& universe, std::span<const ImageRecord> train_images) {
  for (const ImageRecord& r : train_images) {
    if (!universe.is_seen(r.pair)) continue;
    images_.push_back(r);
    by_pair_[r.pair].push_back(r.offset);
  }
  for (const auto& [p, rows] : by_pair_) {
    Negatives n;
    for (const auto& [q, q_rows] : by_pair_) {
      if (q.obj == p.obj && q.attr != p.attr) n.attr.push_back(q);
      if (q.attr == p.attr && q.obj != p.obj) n.obj.push_back(q);
    }
    negatives_.emplace(p, std::move(n));
  }
}

TripletSampler::Negatives TripletSampler::negatives(Pair reference) const {
  const auto it = negatives_.find(reference);
  return it == negatives_.end() ? Negatives{} : it->second;
}

TripletBatch TripletSampler::sample(std::size_t batch_size, Rng& rng) const {
  if (images_.empty()) throw Error("triplet sampler: no training images with a seen pair");
  TripletBatch batch;
  batch.samples.reserve(batch_size);
  auto pick_image = [&](Pair p) {
    const auto& rows = by_pair_.at(p);
    return rows[rng.index(rows.size())];
  };
  for (std::size_t slot = 0; slot < batch_size; ++slot) {
    for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
      const ImageRecord& ref = images_[rng.index(images_.size())];
      const Negatives& n = negatives_.at(ref.pair);
      if (n.attr.empty() || n.obj.empty()) {
        ++batch.skipped;
        continue;
      }
      TripletSample s;
      s.reference = ref.pair;
      s.reference_image = ref.offset;
      s.negative_attr = n.attr[rng.index(n.attr.size())];
      s.negative_attr_image = pick_image(s.negative_attr);
      s.negative_obj = n.obj[rng.index(n.obj.size())];
      s.negative_obj_image = pick_image(s.negative_obj);
      batch.samples.push_back(s);
      break;
    }
  }
  return batch;
}

// --------------------------------------------------------------------- losses

BranchBlock branch_block_draw(Rng& rng, double tau) {
  for (;;) {
    const double wa = rng.uniform();
    const double wo = rng.uniform();
    const BranchBlock b{wa < tau, wo < tau};
    if (!(b.attr && b.obj)) return b;
  }
}

template <typename T>
ad::Var triplet_term(ad::Graph<T>& g, ad::Var negative, ad::Var positive, ad::Var reference, T margin) {
  const ad::Var d_neg = g.euclidean_distance(reference, negative);
  const ad::Var d_pos = g.euclidean_distance(reference, positive);
  return g.softplus(g.add_scalar(g.sub(d_pos, d_neg), margin));
}

template <typename T>
T triplet_term(const Tensor<T>& negative, const Tensor<T>& positive, const Tensor<T>& reference, T margin) {
  ad::Graph<T> g;
  const ad::Var t = triplet_term(g, g.constant(negative), g.constant(positive), g.constant(reference), margin);
  return g.value(g.mean(t))[0];
}

template <typename T>
HingeTerms hinge_terms(ad::Graph<T>& g, const HingeInputs& in, T margin, BranchBlock block) {
  HingeTerms t;
  if (!block.attr) {
    t.visual_attr = g.mean(triplet_term(g, in.concept_neg_attr, in.concept_attr, in.visual_attr, margin));
    t.concept_attr = g.mean(triplet_term(g, in.visual_neg_attr, in.visual_attr, in.concept_attr, margin));
  }
  if (!block.obj) {
    t.visual_obj = g.mean(triplet_term(g, in.concept_neg_obj, in.concept_obj, in.visual_obj, margin));
    t.concept_obj = g.mean(triplet_term(g, in.visual_neg_obj, in.visual_obj, in.concept_obj, margin));
  }
  return t;
}

template <typename T>
std::pair<ad::Var, ad::Var> hinge_losses(ad::Graph<T>& g, const HingeInputs& in, T margin) {
  const HingeTerms t = hinge_terms(g, in, margin);
  return {g.add(t.visual_attr, t.visual_obj), g.add(t.concept_attr, t.concept_obj)};
}

namespace {

template <typename T>
ad::Var linear(ad::Graph<T>& g, const Linear<T>& l, ad::Var x) {
  return g.add_bias(g.matmul(x, g.param(l.weight)), g.param(l.bias));
}

template <typename T>
ad::Var nll(ad::Graph<T>& g, const Linear<T>& classifier, ad::Var features, std::vector<std::size_t> labels) {
  const ad::Var log_p = g.log_softmax(linear(g, classifier, features));
  return g.scale(g.mean(g.pick(log_p, std::move(labels))), T(-1));
}

// Adds the valid vars; invalid when none are.
template <typename T>
ad::Var add_valid(ad::Graph<T>& g, std::initializer_list<ad::Var> parts) {
  ad::Var acc;
  for (ad::Var v : parts) {
    if (!v.valid()) continue;
    acc = acc.valid() ? g.add(acc, v) : v;
  }
  return acc;
}

}  // namespace

template <typename T>
BranchPair aux_terms(ad::Graph<T>& g, const AuxClassifiers<T>& classifiers, ad::Var concept_attr,
                     ad::Var concept_obj, std::vector<std::size_t> attr_labels,
                     std::vector<std::size_t> obj_labels, BranchBlock block) {
  BranchPair t;
  if (!block.attr) t.attr = nll(g, classifiers.attr, concept_attr, std::move(attr_labels));
  if (!block.obj) t.obj = nll(g, classifiers.obj, concept_obj, std::move(obj_labels));
  return t;
}

template <typename T>
ad::Var aux_loss(ad::Graph<T>& g, const AuxClassifiers<T>& classifiers, ad::Var concept_attr,
                 ad::Var concept_obj, std::vector<std::size_t> attr_labels,
                 std::vector<std::size_t> obj_labels) {
  const BranchPair t =
      aux_terms(g, classifiers, concept_attr, concept_obj, std::move(attr_labels), std::move(obj_labels));
  return g.add(t.attr, t.obj);
}

template <typename T>
ad::Var classifier_probabilities(ad::Graph<T>& g, const Linear<T>& classifier, ad::Var features) {
  return g.masked_softmax(linear(g, classifier, features));
}

template <typename T>
BranchPair reconstruction_terms(ad::Graph<T>& g, ad::Var naive_attr, ad::Var blocked_attr, ad::Var naive_obj,
                                ad::Var blocked_obj) {
  return {g.mean(g.squared_l2(g.sub(blocked_attr, naive_attr))),
          g.mean(g.squared_l2(g.sub(blocked_obj, naive_obj)))};
}

template <typename T>
ad::Var reconstruction_loss(ad::Graph<T>& g, ad::Var naive_attr, ad::Var blocked_attr, ad::Var naive_obj,
                            ad::Var blocked_obj) {
  const BranchPair t = reconstruction_terms(g, naive_attr, blocked_attr, naive_obj, blocked_obj);
  return g.add(t.attr, t.obj);
}

template <typename T>
LossValues CombinedLoss<T>::values(const ad::Graph<T>& g) const {
  auto get = [&](ad::Var v) { return v.valid() ? static_cast<double>(g.value(v)[0]) : 0.0; };
  return {get(total), get(l_v), get(l_c), get(l_aux), get(l_r)};
}

std::vector<std::uint32_t> batch_images(const TripletBatch& batch) {
  std::vector<std::uint32_t> out;
  out.reserve(3 * batch.samples.size());
  for (const TripletSample& s : batch.samples) {
    out.push_back(s.reference_image);
    out.push_back(s.negative_attr_image);
    out.push_back(s.negative_obj_image);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

template <typename T>
CombinedLoss<T> build_combined_loss(ad::Graph<T>& g, const Model<T>& model, const PairUniverse& universe,
                                    const Tensor<float>& features, const TripletBatch& batch,
                                    BranchBlock block, const Tensor<T>& noise, const TrainConfig& config,
                                    bool skip_unweighted) {
  const std::size_t b = batch.samples.size();
  if (b == 0) throw Error("combined loss: empty batch");
  if (block.attr && block.obj) throw Error("combined loss: both branches blocked");
  const std::size_t in = features.dim(1);
  if (in != model.visual.input_dim()) {
    throw ShapeError("combined loss: features have width " + std::to_string(in) + ", model expects " +
                     std::to_string(model.visual.input_dim()));
  }

  // Each distinct image is encoded once; slots index into the distinct rows.
  const std::vector<std::uint32_t> images = batch_images(batch);
  if (noise.rank() != 2 || noise.dim(0) != images.size()) {
    throw ShapeError("combined loss: noise needs one row per distinct batch image (" +
                     std::to_string(images.size()) + ")");
  }
  auto row_of = [&](std::uint32_t image) {
    return static_cast<std::size_t>(std::lower_bound(images.begin(), images.end(), image) - images.begin());
  };
  std::vector<T> rows(images.size() * in);
  for (std::size_t r = 0; r < images.size(); ++r) {
    if (images[r] >= features.dim(0)) throw Error("combined loss: image row out of range");
    const float* src = features.data().data() + static_cast<std::size_t>(images[r]) * in;
    std::transform(src, src + in, rows.begin() + static_cast<std::ptrdiff_t>(r * in),
                   [](float v) { return static_cast<T>(v); });
  }
  std::vector<Pair> refs, neg_attr, neg_obj;
  std::vector<std::size_t> attr_labels, obj_labels;
  std::vector<std::size_t> ref_rows, neg_attr_rows, neg_obj_rows;
  for (const TripletSample& s : batch.samples) {
    ref_rows.push_back(row_of(s.reference_image));
    neg_attr_rows.push_back(row_of(s.negative_attr_image));
    neg_obj_rows.push_back(row_of(s.negative_obj_image));
    refs.push_back(s.reference);
    neg_attr.push_back(s.negative_attr);
    neg_obj.push_back(s.negative_obj);
    attr_labels.push_back(s.reference.attr);
    obj_labels.push_back(s.reference.obj);
  }
  // The heads only run on the rows their branch uses.
  auto compact = [](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
                    std::vector<std::size_t>& a_pos, std::vector<std::size_t>& b_pos) {
    std::vector<std::size_t> u(a);
    u.insert(u.end(), b.begin(), b.end());
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
    auto pos = [&](std::size_t r) { return static_cast<std::size_t>(std::lower_bound(u.begin(), u.end(), r) - u.begin()); };
    for (std::size_t r : a) a_pos.push_back(pos(r));
    for (std::size_t r : b) b_pos.push_back(pos(r));
    return u;
  };
  std::vector<std::size_t> ref_in_attr, neg_in_attr, ref_in_obj, neg_in_obj;
  const auto attr_rows = compact(ref_rows, neg_attr_rows, ref_in_attr, neg_in_attr);
  const auto obj_rows = compact(ref_rows, neg_obj_rows, ref_in_obj, neg_in_obj);

  VisualGraph<T> vg(g, model.visual, model.config.use_residue);
  const ad::Var x = vg.encode_composite(g.constant(Tensor<T>({images.size(), in}, std::move(rows))),
                                        EncodeMode::Train, &noise);
  const ad::Var x_attr = vg.attr_features(g.gather_rows(x, attr_rows));
  const ad::Var x_obj = vg.obj_features(g.gather_rows(x, obj_rows));

  HingeInputs h;
  h.visual_attr = g.gather_rows(x_attr, ref_in_attr);
  h.visual_neg_attr = g.gather_rows(x_attr, neg_in_attr);
  h.visual_obj = g.gather_rows(x_obj, ref_in_obj);
  h.visual_neg_obj = g.gather_rows(x_obj, neg_in_obj);

  ConceptGraph<T> cg(g, model.concepts, universe);
  auto ids = [](const std::vector<Pair>& ps, ConceptKind kind) {
    std::vector<std::uint32_t> out;
    for (Pair p : ps) out.push_back(kind == ConceptKind::Attribute ? p.attr : p.obj);
    return out;
  };
  const bool blocking = model.config.edge_blocking;
  auto concept_rows = [&](ConceptKind kind, const std::vector<Pair>& ps) {
    return blocking ? cg.blocked_features(kind, ps) : cg.naive_features(kind, ids(ps, kind));
  };
  h.concept_attr = concept_rows(ConceptKind::Attribute, refs);
  h.concept_neg_attr = concept_rows(ConceptKind::Attribute, neg_attr);
  h.concept_obj = concept_rows(ConceptKind::Object, refs);
  h.concept_neg_obj = concept_rows(ConceptKind::Object, neg_obj);

  auto wanted = [&](double lambda) { return !(skip_unweighted && lambda == 0); };
  const T margin = static_cast<T>(config.margin);
  CombinedLoss<T> out;
  HingeTerms ht;
  if (wanted(config.lambda_v) || wanted(config.lambda_c)) ht = hinge_terms(g, h, margin, block);
  if (wanted(config.lambda_v)) out.l_v = add_valid(g, {ht.visual_attr, ht.visual_obj});
  if (wanted(config.lambda_c)) out.l_c = add_valid(g, {ht.concept_attr, ht.concept_obj});
  if (wanted(config.lambda_a)) {
    const BranchPair a = aux_terms(g, model.classifiers, h.concept_attr, h.concept_obj, attr_labels,
                                   obj_labels, block);
    out.l_aux = add_valid(g, {a.attr, a.obj});
  }
  if (blocking && wanted(config.lambda_r)) {
    const ad::Var naive_attr = cg.naive_features(ConceptKind::Attribute, ids(refs, ConceptKind::Attribute));
    const ad::Var naive_obj = cg.naive_features(ConceptKind::Object, ids(refs, ConceptKind::Object));
    out.l_r = reconstruction_loss(g, naive_attr, h.concept_attr, naive_obj, h.concept_obj);
  }

  auto weighted = [&](ad::Var v, double lambda) {
    return v.valid() && lambda != 0 ? g.scale(v, static_cast<T>(lambda)) : ad::Var{};
  };
  out.total = add_valid(g, {weighted(out.l_v, config.lambda_v), weighted(out.l_c, config.lambda_c),
                            weighted(out.l_aux, config.lambda_a), weighted(out.l_r, config.lambda_r)});
  if (!out.total.valid()) out.total = g.constant(Tensor<T>::scalar(T(0)));
  return out;
}

// --------------------------------------------------------------------- loop

template <typename T>
Trainer<T>::Trainer(const Dataset& data, const ModelConfig& model_config, const TrainConfig& config)
    : data_(data), sampler_(data.universe, data.images_in(Split::Train)), rng_(config.seed) {
  config.validate();
  if (model_config.input_dim != data.feature_dim()) {
    throw ConfigError("model.input_dim: " + std::to_string(model_config.input_dim) +
                      " does not match the feature width " + std::to_string(data.feature_dim()));
  }
  if (model_config.dim == 0) throw ConfigError("model.dim: must be positive");
  state_.model_config = model_config;
  state_.train_config = config;
  state_.model = Model<T>::init(model_config, data.universe.num_attributes(), data.universe.num_objects(), rng_);
  state_.optimizer = AdamState<T>::zeros_like(state_.model);
}

template <typename T>
Trainer<T>::Trainer(const Dataset& data, ModelState<T> state)
    : data_(data), state_(std::move(state)), sampler_(data.universe, data.images_in(Split::Train)) {
  state_.train_config.validate();
  if (state_.model.num_attributes != data.universe.num_attributes() ||
      state_.model.num_objects != data.universe.num_objects()) {
    throw ConfigError("model vocabulary does not match the dataset");
  }
  if (state_.model_config.input_dim != data.feature_dim()) {
    throw ConfigError("model.input_dim does not match the feature width");
  }
  rng_.set_state(state_.rng_state);
}

template <typename T>
std::size_t Trainer<T>::steps_per_epoch() const {
  const std::size_t n = sampler_.num_images();
  const std::size_t bs = state_.train_config.batch_size;
  return std::max<std::size_t>(1, (n + bs - 1) / bs);
}

template <typename T>
StepResult Trainer<T>::step() {
  const TripletBatch batch = sampler_.sample(state_.train_config.batch_size, rng_);
  if (batch.samples.empty()) {
    throw Error("training: no reference image has both an attribute and an object negative");
  }
  const BranchBlock block = branch_block_draw(rng_, state_.train_config.tau);
  const Tensor<T> noise = rng_.normal<T>({batch_images(batch).size(), state_.model_config.dim});
  return combined_step(batch, block, noise);
}

template <typename T>
StepResult Trainer<T>::combined_step(const TripletBatch& batch, BranchBlock block, const Tensor<T>& noise) {
  if (batch.skipped > 0 && !warned_skip_ && log_) {
    *log_ << "warning: " << batch.skipped
          << " reference draws had no valid negative and were skipped\n";
    warned_skip_ = true;
  }
  ad::Graph<T> g;
  const CombinedLoss<T> loss = build_combined_loss(g, state_.model, data_.universe, data_.features, batch, block,
                                                   noise, state_.train_config, skip_unweighted_);
  StepResult result;
  result.losses = loss.values(g);
  result.block = block;
  result.batch_size = batch.samples.size();
  result.skipped = batch.skipped;

  if (!std::isfinite(result.losses.total)) {
    std::string dump;
    if (!dump_dir_.empty()) {
      nlohmann::ordered_json j;
      j["step"] = state_.step;
      j["epoch"] = state_.epoch;
      j["losses"] = {{"total", result.losses.total}, {"l_v", result.losses.l_v}, {"l_c", result.losses.l_c},
                     {"l_aux", result.losses.l_aux}, {"l_r", result.losses.l_r}};
      j["blocked"] = {{"attr", block.attr}, {"obj", block.obj}};
      auto& samples = j["samples"] = nlohmann::ordered_json::array();
      for (const TripletSample& s : batch.samples) {
        samples.push_back({{"reference", {s.reference.attr, s.reference.obj}},
                           {"reference_image", s.reference_image},
                           {"negative_attr", {s.negative_attr.attr, s.negative_attr.obj}},
                           {"negative_attr_image", s.negative_attr_image},
                           {"negative_obj", {s.negative_obj.attr, s.negative_obj.obj}},
                           {"negative_obj_image", s.negative_obj_image}});
      }
      std::filesystem::create_directories(dump_dir_);
      const auto path = dump_dir_ / ("nonfinite_step" + std::to_string(state_.step) + ".json");
      std::ofstream(path) << j.dump(2) << '\n';
      dump = path.string();
    }
    throw NonFiniteLossError("training: non-finite loss at step " + std::to_string(state_.step) +
                                 (dump.empty() ? std::string() : "; batch written to " + dump),
                             dump);
  }

  g.backward(loss.total);
  std::vector<Tensor<T>> grads;
  state_.model.for_each([&](const std::string&, const Tensor<T>& t) {
    const ad::Var v = g.find_param(t);
    grads.push_back(v.valid() ? g.take_grad(v) : Tensor<T>(t.shape()));
  });
  AdamConfig adam;
  adam.learning_rate = state_.train_config.learning_rate;
  adam_update(state_.model, grads, state_.optimizer, adam);
  ++state_.step;
  return result;
}

template <typename T>
EpochRecord Trainer<T>::run_epoch() {
  EpochRecord rec;
  const std::size_t steps = steps_per_epoch();
  for (std::size_t i = 0; i < steps; ++i) {
    const StepResult r = step();
    rec.l_v += r.losses.l_v;
    rec.l_c += r.losses.l_c;
    rec.l_aux += r.losses.l_aux;
    rec.l_r += r.losses.l_r;
  }
  const double n = static_cast<double>(steps);
  rec.l_v /= n;
  rec.l_c /= n;
  rec.l_aux /= n;
  rec.l_r /= n;
  ++state_.epoch;
  rec.epoch = state_.epoch;
  rec.val_auc = std::numeric_limits<double>::quiet_NaN();
  return rec;
}

template <typename T>
ModelState<T> Trainer<T>::state() const {
  ModelState<T> s = state_;
  s.rng_state = rng_.state();
  return s;
}

template <typename T>
const ModelState<T>& Trainer<T>::state_view() {
  state_.rng_state = rng_.state();
  return state_;
}

namespace {

template <typename T>
double validation_auc(const Model<T>& model, const Dataset& data) {
  const std::size_t k[] = {1};
  try {
    return evaluate(model, data, Split::Val, k).metrics.front().auc;
  } catch (const Error&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

template <typename T>
TrainResult<T> train(Trainer<T>& trainer, const TrainHooks& hooks) {
  if (hooks.log) trainer.set_log(hooks.log);
  if (!hooks.dump_dir.empty()) trainer.set_dump_dir(hooks.dump_dir);
  TrainResult<T> result;
  result.best = trainer.state();
  result.best_epoch = static_cast<std::size_t>(result.best.epoch);
  result.best_val_auc = std::numeric_limits<double>::quiet_NaN();
  bool scored = false;
  while (trainer.state_epoch() < trainer.config().epochs) {
    EpochRecord rec = trainer.run_epoch();
    rec.val_auc = validation_auc(trainer.model(), trainer.data());
    result.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    const bool improved = !std::isnan(rec.val_auc) && (!scored || rec.val_auc > result.best_val_auc);
    if (improved) {
      scored = true;
      result.best = trainer.state();
      result.best_epoch = rec.epoch;
      result.best_val_auc = rec.val_auc;
    }
    if (!hooks.checkpoint_dir.empty()) {
      const auto& universe = trainer.data().universe;
      save_checkpoint(hooks.checkpoint_dir / "checkpoint_last.bin", trainer.state_view(), universe);
      if (improved) save_checkpoint(hooks.checkpoint_dir / "checkpoint_best.bin", result.best, universe);
    }
  }
  result.last = trainer.state();
  if (!scored) {
    result.best = result.last;
    result.best_epoch = static_cast<std::size_t>(result.last.epoch);
  }
  if (!hooks.checkpoint_dir.empty()) {
    const auto& universe = trainer.data().universe;
    save_checkpoint(hooks.checkpoint_dir / "checkpoint_last.bin", result.last, universe);
    save_checkpoint(hooks.checkpoint_dir / "checkpoint_best.bin", result.best, universe);
  }
  return result;
}

template <typename T>
TrainResult<T> train(const Dataset& data, const ModelConfig& model_config, const TrainConfig& config,
                     const TrainHooks& hooks) {
  Trainer<T> trainer(data, model_config, config);
  return train(trainer, hooks);
}

#define BMP_INSTANTIATE(T)                                                                                 \
  template ad::Var triplet_term(ad::Graph<T>&, ad::Var, ad::Var, ad::Var, T);                              \
  template T triplet_term(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                        \
  template HingeTerms hinge_terms(ad::Graph<T>&, const HingeInputs&, T, BranchBlock);                      \
  template std::pair<ad::Var, ad::Var> hinge_losses(ad::Graph<T>&, const HingeInputs&, T);                 \
  template BranchPair aux_terms(ad::Graph<T>&, const AuxClassifiers<T>&, ad::Var, ad::Var,                 \
                                std::vector<std::size_t>, std::vector<std::size_t>, BranchBlock);          \
  template ad::Var aux_loss(ad::Graph<T>&, const AuxClassifiers<T>&, ad::Var, ad::Var,                     \
                            std::vector<std::size_t>, std::vector<std::size_t>);                           \
  template ad::Var classifier_probabilities(ad::Graph<T>&, const Linear<T>&, ad::Var);                     \
  template BranchPair reconstruction_terms(ad::Graph<T>&, ad::Var, ad::Var, ad::Var, ad::Var);             \
  template ad::Var reconstruction_loss(ad::Graph<T>&, ad::Var, ad::Var, ad::Var, ad::Var);                 \
  template struct CombinedLoss<T>;                                                                         \
  template CombinedLoss<T> build_combined_loss(ad::Graph<T>&, const Model<T>&, const PairUniverse&,        \
                                               const Tensor<float>&, const TripletBatch&, BranchBlock,     \
                                               const Tensor<T>&, const TrainConfig&, bool);                \
  template struct ModelState<T>;                                                                           \
  template class Trainer<T>;                                                                               \
  template TrainResult<T> train(Trainer<T>&, const TrainHooks&);                                           \
  template TrainResult<T> train(const Dataset&, const ModelConfig&, const TrainConfig&, const TrainHooks&);
BMP_INSTANTIATE(float)
BMP_INSTANTIATE(double)
#undef BMP_INSTANTIATE

}  // namespace bmp
