#include "pgd/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "json.hpp"

namespace pgd {

namespace {

double discount(std::size_t position) {  // 1-indexed
  return 1.0 / std::log2(static_cast<double>(position) + 1.0);
}

double ideal_dcg(std::size_t relevant, int k) {
  double idcg = 0.0;
  const std::size_t n = std::min(relevant, static_cast<std::size_t>(k));
  for (std::size_t p = 1; p <= n; ++p) idcg += discount(p);
  return idcg;
}

bool is_relevant(std::span<const Index> relevant, Index item) {
  return std::binary_search(relevant.begin(), relevant.end(), item);
}

struct Query {
  EntityRef user;
  std::vector<Index> relevant;  // sorted
  std::vector<Index> excluded;  // sorted
};

}  // namespace

std::vector<Index> rank_candidates(TaskKind task, const ForwardOutputs& outputs,
                                   const EntityRef& user, const std::vector<EntityRef>& candidates,
                                   std::span<const Index> candidate_ids) {
  PGD_REQUIRE(!candidates.empty(), "no candidates to rank");
  PGD_REQUIRE(candidates.size() == candidate_ids.size(), "candidate ids do not match candidates");
  const auto u = user_embedding(task, outputs, user);
  std::vector<std::pair<double, Index>> scored;
  scored.reserve(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    scored.emplace_back(dot(u, item_embedding(task, outputs, candidates[c])), candidate_ids[c]);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  std::vector<Index> out;
  out.reserve(scored.size());
  for (const auto& s : scored) out.push_back(s.second);
  return out;
}

std::optional<double> hr_at_k(std::span<const Index> ranked, std::span<const Index> relevant,
                              int k) {
  PGD_REQUIRE(k >= 1, "K must be positive");
  if (relevant.empty()) return std::nullopt;
  const std::size_t n = std::min(ranked.size(), static_cast<std::size_t>(k));
  std::size_t hits = 0;
  for (std::size_t p = 0; p < n; ++p) hits += is_relevant(relevant, ranked[p]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

std::optional<double> ndcg_at_k(std::span<const Index> ranked, std::span<const Index> relevant,
                                int k) {
  PGD_REQUIRE(k >= 1, "K must be positive");
  if (relevant.empty()) return std::nullopt;
  const std::size_t n = std::min(ranked.size(), static_cast<std::size_t>(k));
  double dcg = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    if (is_relevant(relevant, ranked[p])) dcg += discount(p + 1);
  }
  return dcg / ideal_dcg(relevant.size(), k);
}

double random_hr_at_k(std::size_t candidates, std::size_t relevant, int k) {
  if (candidates == 0 || relevant == 0) return 0.0;
  return static_cast<double>(std::min(candidates, static_cast<std::size_t>(k))) /
         static_cast<double>(candidates);
}

double random_ndcg_at_k(std::size_t candidates, std::size_t relevant, int k) {
  if (candidates == 0 || relevant == 0) return 0.0;
  // each position holds a relevant item with probability relevant/candidates
  const double p = static_cast<double>(relevant) / static_cast<double>(candidates);
  double dcg = 0.0;
  const std::size_t n = std::min(candidates, static_cast<std::size_t>(k));
  for (std::size_t pos = 1; pos <= n; ++pos) dcg += p * discount(pos);
  return dcg / ideal_dcg(relevant, k);
}

EvalReport evaluate(const SplitBundle& split, const ForwardOutputs& outputs, const EvalSpec& spec) {
  PGD_REQUIRE(!spec.ks.empty(), "no K values requested");
  for (int k : spec.ks) PGD_REQUIRE(k >= 1, "K values must be positive");
  const auto start = std::chrono::steady_clock::now();
  const auto& train = split.train;
  const TaskKind task = spec.task;

  EvalReport report;
  report.task = task;
  report.ks = spec.ks;

  const bool cold_items = task == TaskKind::NewItem || task == TaskKind::NewBoth;
  const bool cold_users = task == TaskKind::NewUser || task == TaskKind::NewBoth;
  const std::vector<Interaction>* rows = nullptr;
  switch (task) {
    case TaskKind::Warm: rows = &split.val; break;
    case TaskKind::NewUser: rows = &split.test_new_user; break;
    case TaskKind::NewItem: rows = &split.test_new_item; break;
    case TaskKind::NewBoth: rows = &split.test_both; break;
  }

  // candidate universe embeddings
  const Index universe = cold_items ? static_cast<Index>(split.new_item_ids.size()) : train.num_items;
  const Index d = outputs.teacher.item.dim();
  EmbeddingTable items(universe, d);
  std::vector<char> usable_item(static_cast<std::size_t>(universe), 1);
  for (Index j = 0; j < universe; ++j) {
    if (cold_items && split.new_item_attrs[static_cast<std::size_t>(j)].empty()) {
      usable_item[static_cast<std::size_t>(j)] = 0;
      continue;
    }
    const auto ref = cold_items ? EntityRef::cold(split.new_item_attrs[static_cast<std::size_t>(j)])
                                : EntityRef::warm(j);
    const auto emb = item_embedding(task, outputs, ref);
    std::copy(emb.begin(), emb.end(), items.row(j).begin());
  }

  std::vector<std::vector<Index>> train_items;
  if (task == TaskKind::Warm) {
    train_items.resize(static_cast<std::size_t>(train.num_users));
    for (const auto& r : train.interactions) {
      train_items[static_cast<std::size_t>(r.user)].push_back(r.item);
    }
  }

  // rows are sorted by (user, item), so each user's relevant set is contiguous
  std::vector<Query> queries;
  for (std::size_t n = 0; n < rows->size();) {
    const Index u = (*rows)[n].user;
    std::vector<Index> relevant;
    for (; n < rows->size() && (*rows)[n].user == u; ++n) {
      if (usable_item[static_cast<std::size_t>((*rows)[n].item)]) {
        relevant.push_back((*rows)[n].item);
      } else {
        ++report.skipped;
      }
    }
    if (cold_users && split.new_user_attrs[static_cast<std::size_t>(u)].empty()) {
      ++report.skipped;
      continue;
    }
    if (relevant.empty()) continue;
    EntityRef user = cold_users ? EntityRef::cold(split.new_user_attrs[static_cast<std::size_t>(u)])
                                : EntityRef::warm(u);
    std::vector<Index> excluded;
    if (task == TaskKind::Warm) excluded = train_items[static_cast<std::size_t>(u)];
    if (spec.per_interaction) {
      for (Index item : relevant) queries.push_back({user, {item}, excluded});
    } else {
      queries.push_back({std::move(user), std::move(relevant), std::move(excluded)});
    }
  }

  const std::size_t nk = spec.ks.size();
  const int max_k = *std::max_element(spec.ks.begin(), spec.ks.end());
  // per query: hr[nk], ndcg[nk], random_hr[nk], random_ndcg[nk]
  std::vector<double> metrics(queries.size() * nk * 4, 0.0);
  parallel_for(queries.size(), [&](std::size_t qb, std::size_t qe) {
    std::vector<std::pair<double, Index>> scored;
    std::vector<Index> ranked;
    for (std::size_t q = qb; q < qe; ++q) {
      const auto& query = queries[q];
      const auto u = user_embedding(task, outputs, query.user);
      scored.clear();
      for (Index j = 0; j < universe; ++j) {
        if (!usable_item[static_cast<std::size_t>(j)]) continue;
        if (std::binary_search(query.excluded.begin(), query.excluded.end(), j)) continue;
        scored.emplace_back(dot(u, items.row(j)), j);
      }
      const std::size_t top = std::min(scored.size(), static_cast<std::size_t>(max_k));
      std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(top),
                        scored.end(), [](const auto& a, const auto& b) {
                          return a.first > b.first || (a.first == b.first && a.second < b.second);
                        });
      ranked.clear();
      for (std::size_t p = 0; p < top; ++p) ranked.push_back(scored[p].second);
      double* m = metrics.data() + q * nk * 4;
      for (std::size_t t = 0; t < nk; ++t) {
        const int k = spec.ks[t];
        m[t] = *hr_at_k(ranked, query.relevant, k);
        m[nk + t] = *ndcg_at_k(ranked, query.relevant, k);
        m[2 * nk + t] = random_hr_at_k(scored.size(), query.relevant.size(), k);
        m[3 * nk + t] = random_ndcg_at_k(scored.size(), query.relevant.size(), k);
      }
    }
  });

  report.users = queries.size();
  report.hr.assign(nk, 0.0);
  report.ndcg.assign(nk, 0.0);
  report.random_hr.assign(nk, 0.0);
  report.random_ndcg.assign(nk, 0.0);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const double* m = metrics.data() + q * nk * 4;
    for (std::size_t t = 0; t < nk; ++t) {
      report.hr[t] += m[t];
      report.ndcg[t] += m[nk + t];
      report.random_hr[t] += m[2 * nk + t];
      report.random_ndcg[t] += m[3 * nk + t];
    }
  }
  if (!queries.empty()) {
    const double inv = 1.0 / static_cast<double>(queries.size());
    for (std::size_t t = 0; t < nk; ++t) {
      report.hr[t] *= inv;
      report.ndcg[t] *= inv;
      report.random_hr[t] *= inv;
      report.random_ndcg[t] *= inv;
    }
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

EvalReport evaluate(const SplitBundle& split, const PgdParams& params, const EvalSpec& spec) {
  check_compatible(params, split.train);
  const auto graphs = ModelGraphs::build(split.train, params.binarize_student_graph);
  auto report = evaluate(split, forward(params, graphs), spec);
  report.checkpoint_id = checkpoint_fingerprint(params);
  return report;
}

std::string format_report(const EvalReport& r) {
  std::string out;
  for (std::size_t t = 0; t < r.ks.size(); ++t) {
    out += strprintf("task=%s K=%d hr=%.6f ndcg=%.6f users=%zu\n",
                     std::string(task_token(r.task)).c_str(), r.ks[t], r.hr[t], r.ndcg[t], r.users);
  }
  return out;
}

std::string report_json(const std::vector<EvalReport>& reports) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json entry;
    entry["task"] = std::string(task_token(r.task));
    entry["users"] = r.users;
    entry["skipped"] = r.skipped;
    entry["checkpoint_id"] = r.checkpoint_id;
    entry["wall_seconds"] = r.wall_seconds;
    for (std::size_t t = 0; t < r.ks.size(); ++t) {
      entry["metrics"].push_back({{"K", r.ks[t]},
                                  {"hr", r.hr[t]},
                                  {"ndcg", r.ndcg[t]},
                                  {"random_hr", r.random_hr[t]},
                                  {"random_ndcg", r.random_ndcg[t]}});
    }
    doc.push_back(std::move(entry));
  }
  return doc.dump(2) + "\n";
}

}  // namespace pgd
