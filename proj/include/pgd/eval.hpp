#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pgd/data.hpp"
#include "pgd/model.hpp"

namespace pgd {

struct EvalSpec {
  TaskKind task = TaskKind::Warm;
  std::vector<int> ks{10, 20, 50};
  // Score each test interaction as its own query instead of one query per user.
  bool per_interaction = false;
};

struct EvalReport {
  TaskKind task = TaskKind::Warm;
  std::vector<int> ks;
  std::vector<double> hr;
  std::vector<double> ndcg;
  // Expected metrics of a uniformly random ranking over the same queries.
  std::vector<double> random_hr;
  std::vector<double> random_ndcg;
  std::size_t users = 0;
  std::size_t skipped = 0;
  std::string checkpoint_id;
  double wall_seconds = 0.0;
};

// Descending score, ties by ascending item index.
std::vector<Index> rank_candidates(TaskKind task, const ForwardOutputs& outputs,
                                   const EntityRef& user, const std::vector<EntityRef>& candidates,
                                   std::span<const Index> candidate_ids);

// relevant must be sorted. nullopt when relevant is empty.
std::optional<double> hr_at_k(std::span<const Index> ranked, std::span<const Index> relevant,
                              int k);
std::optional<double> ndcg_at_k(std::span<const Index> ranked, std::span<const Index> relevant,
                                int k);

// Closed-form expectations under a uniformly random ordering of
// `candidates` items containing `relevant` relevant ones.
double random_hr_at_k(std::size_t candidates, std::size_t relevant, int k);
double random_ndcg_at_k(std::size_t candidates, std::size_t relevant, int k);

EvalReport evaluate(const SplitBundle& split, const ForwardOutputs& outputs, const EvalSpec& spec);
// Builds graphs and runs the forward pass first.
EvalReport evaluate(const SplitBundle& split, const PgdParams& params, const EvalSpec& spec);

// One `task=<t> K=<k> hr=<v> ndcg=<v> users=<n>` line per K.
std::string format_report(const EvalReport& report);
std::string report_json(const std::vector<EvalReport>& reports);

}  // namespace pgd
