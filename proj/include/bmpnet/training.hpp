#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bmpnet/autodiff.hpp"
#include "bmpnet/dataset.hpp"
#include "bmpnet/model.hpp"
#include "bmpnet/optimizer.hpp"

namespace bmp {

enum class Precision { Float32, Float64 };

struct TrainConfig {
  double margin = 0.5;
  double tau = 0.05;  // branch-blocking threshold, in [0, 0.5)
  // Loss weights; defaults are the UT-Zappos setting.
  double lambda_v = 10.0;
  double lambda_c = 0.5;
  double lambda_a = 1.0;
  double lambda_r = 10.0;
  std::size_t batch_size = 512;
  double learning_rate = 3e-4;
  std::size_t epochs = 200;
  std::uint64_t seed = 0;
  Precision precision = Precision::Float32;

  static TrainConfig ut_zappos();
  static TrainConfig mit_states();

  void validate() const;  // throws ConfigError naming the field
};

// ------------------------------------------------------------------ sampling

struct TripletSample {
  Pair reference;
  Pair negative_attr;  // same object, different attribute
  Pair negative_obj;   // same attribute, different object
  std::uint32_t reference_image = 0;  // feature rows
  std::uint32_t negative_attr_image = 0;
  std::uint32_t negative_obj_image = 0;
};

struct TripletBatch {
  std::vector<TripletSample> samples;
  std::size_t skipped = 0;  // reference draws rejected for lack of negatives
};

class TripletSampler {
 public:
  static constexpr int kMaxRedraws = 100;

  // Only images whose pair is seen are used.
  TripletSampler(const PairUniverse& universe, std::span<const ImageRecord> train_images);

  struct Negatives {
    std::vector<Pair> attr;
    std::vector<Pair> obj;
  };
  // Seen pairs with images that share the object (attr) or attribute (obj).
  Negatives negatives(Pair reference) const;

  // References are drawn uniformly over images. A reference without both
  // kinds of negative is skipped and redrawn; a slot with no valid reference
  // after kMaxRedraws draws is left out.
  TripletBatch sample(std::size_t batch_size, Rng& rng) const;

  std::size_t num_images() const { return images_.size(); }

 private:
  std::vector<ImageRecord> images_;
  std::map<Pair, std::vector<std::uint32_t>> by_pair_;
  std::map<Pair, Negatives> negatives_;
};

// --------------------------------------------------------------------- losses

struct BranchBlock {
  bool attr = false;
  bool obj = false;
};

// Draws w_a, w_o ~ U(0,1) and blocks a branch when its draw is below tau.
// Both blocked at once is redrawn.
BranchBlock branch_block_draw(Rng& rng, double tau);

// log(1 + exp(m - (d(ref, neg) - d(ref, pos)))), row-wise.
template <typename T>
ad::Var triplet_term(ad::Graph<T>& g, ad::Var negative, ad::Var positive, ad::Var reference, T margin);

template <typename T>
T triplet_term(const Tensor<T>& negative, const Tensor<T>& positive, const Tensor<T>& reference, T margin);

// Per-sample rows ([B, d] each) feeding the two hinge objectives.
struct HingeInputs {
  ad::Var concept_attr, concept_neg_attr, concept_obj, concept_neg_obj;
  ad::Var visual_attr, visual_neg_attr, visual_obj, visual_neg_obj;
};

// Batch means of each branch's term; a blocked branch's vars stay invalid.
struct HingeTerms {
  ad::Var visual_attr, visual_obj;    // L_v parts
  ad::Var concept_attr, concept_obj;  // L_c parts
};

template <typename T>
HingeTerms hinge_terms(ad::Graph<T>& g, const HingeInputs& in, T margin, BranchBlock block = {});

// (L_v, L_c) with both branches active.
template <typename T>
std::pair<ad::Var, ad::Var> hinge_losses(ad::Graph<T>& g, const HingeInputs& in, T margin);

struct BranchPair {
  ad::Var attr, obj;
};

// Batch-mean negative log-likelihood of the true attribute and object under
// softmax classifiers applied to concept features.
template <typename T>
BranchPair aux_terms(ad::Graph<T>& g, const AuxClassifiers<T>& classifiers, ad::Var concept_attr,
                     ad::Var concept_obj, std::vector<std::size_t> attr_labels,
                     std::vector<std::size_t> obj_labels, BranchBlock block = {});

template <typename T>
ad::Var aux_loss(ad::Graph<T>& g, const AuxClassifiers<T>& classifiers, ad::Var concept_attr,
                 ad::Var concept_obj, std::vector<std::size_t> attr_labels,
                 std::vector<std::size_t> obj_labels);

// Class probabilities of a classifier for the given feature rows.
template <typename T>
ad::Var classifier_probabilities(ad::Graph<T>& g, const Linear<T>& classifier, ad::Var features);

// Batch means of |blocked - naive|^2 for each branch.
template <typename T>
BranchPair reconstruction_terms(ad::Graph<T>& g, ad::Var naive_attr, ad::Var blocked_attr,
                                ad::Var naive_obj, ad::Var blocked_obj);

template <typename T>
ad::Var reconstruction_loss(ad::Graph<T>& g, ad::Var naive_attr, ad::Var blocked_attr,
                            ad::Var naive_obj, ad::Var blocked_obj);

struct LossValues {
  double total = 0, l_v = 0, l_c = 0, l_aux = 0, l_r = 0;
};

// Distinct image ids used by a batch, ascending.
std::vector<std::uint32_t> batch_images(const TripletBatch& batch);

template <typename T>
struct CombinedLoss {
  ad::Var total;
  ad::Var l_v, l_c, l_aux, l_r;  // unweighted; invalid when not computed
  LossValues values(const ad::Graph<T>& g) const;
};

// Builds L' = λv Lv + λc Lc + λa Laux + λr Lr for one batch. Blocked message
// passing feeds the hinge and classification terms; naive message passing
// only feeds Lr. A blocked branch contributes no hinge or classification
// term. `noise` ([U, d], one row per entry of batch_images(batch)) is the
// frozen residue draw, shared by every slot that shows the same image. With
// `skip_unweighted`, terms whose weight is 0 are not built.
template <typename T>
CombinedLoss<T> build_combined_loss(ad::Graph<T>& g, const Model<T>& model, const PairUniverse& universe,
                                    const Tensor<float>& features, const TripletBatch& batch,
                                    BranchBlock block, const Tensor<T>& noise, const TrainConfig& config,
                                    bool skip_unweighted = false);

// --------------------------------------------------------------------- loop

template <typename T>
struct ModelState {
  ModelConfig model_config;
  TrainConfig train_config;
  Model<T> model;
  AdamState<T> optimizer;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::string rng_state;
};

struct StepResult {
  LossValues losses;
  BranchBlock block;
  std::size_t batch_size = 0;
  std::size_t skipped = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double l_v = 0, l_c = 0, l_aux = 0, l_r = 0;
  double val_auc = 0;  // top-1, as a fraction; NaN when validation cannot be scored
};

template <typename T>
class Trainer {
 public:
  Trainer(const Dataset& data, const ModelConfig& model_config, const TrainConfig& config);
  Trainer(const Dataset& data, ModelState<T> state);

  // Samples a batch, draws branch blocking and residue noise, then runs
  // combined_step.
  StepResult step();
  // One optimizer update on a given batch. Throws NonFiniteLossError (after
  // writing a batch dump when a dump directory is set) on a non-finite loss.
  StepResult combined_step(const TripletBatch& batch, BranchBlock block, const Tensor<T>& noise);

  // ceil(train images / batch size)
  std::size_t steps_per_epoch() const;
  EpochRecord run_epoch();

  ModelState<T> state() const;
  // The live state without a copy; valid until the next step.
  const ModelState<T>& state_view();
  const Model<T>& model() const { return state_.model; }
  const Dataset& data() const { return data_; }
  std::uint64_t state_epoch() const { return state_.epoch; }
  const TrainConfig& config() const { return state_.train_config; }
  const TripletSampler& sampler() const { return sampler_; }
  Rng& rng() { return rng_; }

  void set_skip_unweighted_terms(bool skip) { skip_unweighted_ = skip; }
  void set_dump_dir(std::filesystem::path dir) { dump_dir_ = std::move(dir); }
  void set_log(std::ostream* log) { log_ = log; }

 private:
  const Dataset& data_;
  ModelState<T> state_;
  TripletSampler sampler_;
  Rng rng_;
  bool skip_unweighted_ = false;
  bool warned_skip_ = false;
  std::filesystem::path dump_dir_;
  std::ostream* log_ = nullptr;
};

template <typename T>
struct TrainResult {
  ModelState<T> best;
  std::size_t best_epoch = 0;
  double best_val_auc = 0;
  ModelState<T> last;
  std::vector<EpochRecord> history;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  std::ostream* log = nullptr;
  std::filesystem::path dump_dir;
  // When set, checkpoint_last.bin is rewritten after every epoch and
  // checkpoint_best.bin whenever validation improves (and both at the end).
  std::filesystem::path checkpoint_dir;
};

// Runs the trainer until it reaches config().epochs, keeping the state with
// the best top-1 validation AUC (ties keep the earlier epoch; when validation
// cannot be scored the last epoch wins).
template <typename T>
TrainResult<T> train(Trainer<T>& trainer, const TrainHooks& hooks = {});

template <typename T>
TrainResult<T> train(const Dataset& data, const ModelConfig& model_config, const TrainConfig& config,
                     const TrainHooks& hooks = {});

}  // namespace bmp
