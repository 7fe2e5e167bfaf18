#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pgd/data.hpp"
#include "pgd/eval.hpp"
#include "pgd/model.hpp"

namespace pgd {

struct DistillWeights {
  double lambda = 100.0;  // user embedding distillation
  double mu = 1.0;        // item embedding distillation
  double eta = 0.01;      // prediction distillation
};

// Named weight presets: yelp, amazon, xing.
std::optional<DistillWeights> distill_preset(std::string_view name);

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 2048;
  int epochs = 50;
  double gamma = 1e-4;
  DistillWeights weights;
  LayerCounts layers;
  Index dim = kDefaultDim;
  std::uint64_t seed = 1;
  int negatives_per_positive = 1;
  int eval_every = 1;
  // 0 users/items means "the distinct users/items of the BPR batch".
  std::size_t distill_users = 0;
  std::size_t distill_items = 0;
  std::size_t distill_pairs = 2048;
  bool detach_teacher = true;
  bool binarize_student_graph = false;

  // Throws ContractError on invalid settings.
  void validate() const;
};

struct BprTriple {
  Index user = 0;
  Index positive = 0;
  Index negative = 0;
  bool operator==(const BprTriple&) const = default;
};

// Per-user sorted item lists for membership tests.
class InteractionIndex {
 public:
  explicit InteractionIndex(const Dataset& dataset);
  bool contains(Index user, Index item) const;
  const std::vector<Index>& items_of(Index user) const {
    return items_[static_cast<std::size_t>(user)];
  }
  Index num_items() const { return num_items_; }

 private:
  std::vector<std::vector<Index>> items_;
  Index num_items_ = 0;
};

// One epoch of triples: every train positive in shuffled order, each paired
// with negatives_per_positive rejection-sampled negatives. Users who clicked
// every item are skipped and counted.
std::vector<BprTriple> sample_triples(const InteractionIndex& index,
                                      const std::vector<Interaction>& positives, Rng& rng,
                                      int negatives_per_positive = 1,
                                      std::size_t* skipped = nullptr);

// Gradients for the five parameter tables.
struct ParamGrads {
  EmbeddingTable U, V, Y, E, F;

  static ParamGrads zeros_like(const PgdParams& params);
  std::array<EmbeddingTable*, 5> tables() { return {&U, &V, &Y, &E, &F}; }
  std::array<const EmbeddingTable*, 5> tables() const { return {&U, &V, &Y, &E, &F}; }
};

struct LossBreakdown {
  double bpr = 0.0;  // sum of -ln sigmoid(margin)
  double reg = 0.0;  // gamma * (|U|^2 + |V|^2)
  double lu = 0.0;
  double lv = 0.0;
  double ls = 0.0;

  double lr() const { return bpr + reg; }
  double ld(const DistillWeights& w) const { return w.lambda * lu + w.mu * lv + w.eta * ls; }
  double total(const DistillWeights& w) const { return lr() + ld(w); }
};

// Gradients at propagated (layer-L) embeddings.
struct OutputGrads {
  EmbeddingTable teacher_user;  // M x d
  EmbeddingTable teacher_item;  // N x d
  EmbeddingTable user_student_attr;  // D_u x d
  EmbeddingTable item_student_attr;  // D_v x d

  static OutputGrads zeros_like(const ForwardOutputs& outputs);
};

// Adds BPR gradients at the teacher outputs and returns the summed BPR loss.
double bpr_loss_and_grads(std::span<const BprTriple> batch, const ForwardOutputs& outputs,
                          OutputGrads& grads);

// gamma * (|U|^2 + |V|^2), with its gradient added to grads.U / grads.V.
double l2_loss_and_grads(const PgdParams& params, double gamma, ParamGrads& grads);

struct DistillSample {
  std::vector<Index> users;
  std::vector<Index> items;
  std::vector<std::pair<Index, Index>> pairs;
};

DistillSample draw_distill_sample(std::span<const BprTriple> batch, const Dataset& train,
                                  const TrainConfig& config, Rng& rng);

// Adds weighted distillation gradients at the student attribute outputs (and
// at the teacher outputs unless detach_teacher). Returns unweighted Lu, Lv, Ls
// in the corresponding LossBreakdown fields.
LossBreakdown distill_loss_and_grads(const DistillSample& sample, const Dataset& train,
                                     const ForwardOutputs& outputs, const DistillWeights& weights,
                                     bool detach_teacher, OutputGrads& grads);

// Pulls output gradients back to the layer-0 tables.
void backpropagate_outputs(const ForwardOutputs& outputs, const OutputGrads& out_grads,
                           ParamGrads& grads);

// Full objective and its gradient for fixed samples at the current params.
LossBreakdown loss_and_grads(const PgdParams& params, const ModelGraphs& graphs,
                             const Dataset& train, std::span<const BprTriple> batch,
                             const DistillSample& sample, const TrainConfig& config,
                             ParamGrads* grads);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  ParamGrads first_moment;
  ParamGrads second_moment;

  static AdamState for_params(const PgdParams& params);
};

// Throws NumericError naming the table when a gradient is not finite.
void adam_step(PgdParams& params, AdamState& state, const ParamGrads& grads, double learning_rate);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double lu = 0.0;
  double lv = 0.0;
  double ls = 0.0;
  std::optional<double> val_ndcg20;
};

std::string format_log_line(const EpochLog& entry);

struct TrainResult {
  PgdParams params;  // best validation checkpoint (or last when no validation)
  std::vector<EpochLog> log;
  int best_epoch = 0;
  bool diverged = false;
  std::string message;
};

TrainResult train(const SplitBundle& split, const TrainConfig& config);

}  // namespace pgd
