#include "pgd/train.hpp"

#include <algorithm>
#include <cmath>

namespace pgd {

std::optional<DistillWeights> distill_preset(std::string_view name) {
  if (name == "yelp") return DistillWeights{100.0, 1.0, 0.01};
  // the amazon data has item attributes only, so only mu is in play
  if (name == "amazon") return DistillWeights{0.0, 10.0, 0.0};
  if (name == "xing") return DistillWeights{1.0, 100.0, 0.001};
  return std::nullopt;
}

void TrainConfig::validate() const {
  PGD_REQUIRE(learning_rate > 0.0, "learning_rate must be positive");
  PGD_REQUIRE(batch_size >= 1, "batch_size must be at least 1");
  PGD_REQUIRE(epochs >= 0, "epochs must be non-negative");
  PGD_REQUIRE(gamma >= 0.0, "gamma must be non-negative");
  PGD_REQUIRE(weights.lambda >= 0.0 && weights.mu >= 0.0 && weights.eta >= 0.0,
              "distillation weights must be non-negative");
  PGD_REQUIRE(layers.teacher >= 1 && layers.user_student >= 1 && layers.item_student >= 1,
              "layer counts must be at least 1");
  PGD_REQUIRE(dim >= 1, "dim must be positive");
  PGD_REQUIRE(negatives_per_positive >= 1, "negatives_per_positive must be at least 1");
  PGD_REQUIRE(eval_every >= 1, "eval_every must be at least 1");
}

InteractionIndex::InteractionIndex(const Dataset& ds)
    : items_(static_cast<std::size_t>(ds.num_users)), num_items_(ds.num_items) {
  for (const auto& r : ds.interactions) items_[static_cast<std::size_t>(r.user)].push_back(r.item);
  for (auto& row : items_) std::sort(row.begin(), row.end());
}

bool InteractionIndex::contains(Index user, Index item) const {
  const auto& row = items_[static_cast<std::size_t>(user)];
  return std::binary_search(row.begin(), row.end(), item);
}

std::vector<BprTriple> sample_triples(const InteractionIndex& index,
                                      const std::vector<Interaction>& positives, Rng& rng,
                                      int negatives_per_positive, std::size_t* skipped) {
  std::vector<Interaction> order = positives;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<BprTriple> out;
  out.reserve(order.size() * static_cast<std::size_t>(negatives_per_positive));
  std::size_t skip = 0;
  const auto n = static_cast<std::size_t>(index.num_items());
  for (const auto& r : order) {
    if (index.items_of(r.user).size() >= n) {
      ++skip;
      continue;
    }
    for (int t = 0; t < negatives_per_positive; ++t) {
      Index neg;
      do {
        neg = static_cast<Index>(uniform_index(rng, n));
      } while (index.contains(r.user, neg));
      out.push_back({r.user, r.item, neg});
    }
  }
  if (skipped) *skipped = skip;
  return out;
}

ParamGrads ParamGrads::zeros_like(const PgdParams& p) {
  return {EmbeddingTable(p.U.rows(), p.U.dim()), EmbeddingTable(p.V.rows(), p.V.dim()),
          EmbeddingTable(p.Y.rows(), p.Y.dim()), EmbeddingTable(p.E.rows(), p.E.dim()),
          EmbeddingTable(p.F.rows(), p.F.dim())};
}

OutputGrads OutputGrads::zeros_like(const ForwardOutputs& o) {
  const Index d = o.teacher.user.dim();
  return {EmbeddingTable(o.teacher.user.rows(), d), EmbeddingTable(o.teacher.item.rows(), d),
          EmbeddingTable(o.user_student.attr.rows(), d),
          EmbeddingTable(o.item_student.attr.rows(), d)};
}

namespace {

// -ln(sigmoid(x)) without overflow
double softplus_neg(double x) {
  return x > 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t c = 0; c < x.size(); ++c) y[c] += a * x[c];
}

// Spreads g onto every attribute row that was summed into a composed embedding.
void scatter(std::span<const Index> attrs, Index offset, double a, std::span<const double> g,
             EmbeddingTable& table) {
  for (Index k : attrs) axpy(a, g, table.row(k - offset));
}

}  // namespace

double bpr_loss_and_grads(std::span<const BprTriple> batch, const ForwardOutputs& outputs,
                          OutputGrads& grads) {
  const auto& users = outputs.teacher.user;
  const auto& items = outputs.teacher.item;
  double loss = 0.0;
  for (const auto& t : batch) {
    const auto u = users.row(t.user);
    const auto vi = items.row(t.positive);
    const auto vj = items.row(t.negative);
    const double margin = dot(u, vi) - dot(u, vj);
    loss += softplus_neg(margin);
    const double factor = sigmoid(-margin);  // -d/dmargin
    auto gu = grads.teacher_user.row(t.user);
    for (std::size_t c = 0; c < u.size(); ++c) gu[c] -= factor * (vi[c] - vj[c]);
    axpy(-factor, u, grads.teacher_item.row(t.positive));
    axpy(factor, u, grads.teacher_item.row(t.negative));
  }
  return loss;
}

double l2_loss_and_grads(const PgdParams& params, double gamma, ParamGrads& grads) {
  if (gamma == 0.0) return 0.0;
  double sq = 0.0;
  for (auto [table, grad] : {std::pair{&params.U, &grads.U}, std::pair{&params.V, &grads.V}}) {
    const auto w = table->values();
    auto g = grad->values();
    for (std::size_t n = 0; n < w.size(); ++n) {
      sq += w[n] * w[n];
      g[n] += 2.0 * gamma * w[n];
    }
  }
  return gamma * sq;
}

DistillSample draw_distill_sample(std::span<const BprTriple> batch, const Dataset& train,
                                  const TrainConfig& config, Rng& rng) {
  DistillSample s;
  const auto M = static_cast<std::size_t>(train.num_users);
  const auto N = static_cast<std::size_t>(train.num_items);
  if (config.distill_users == 0) {
    for (const auto& t : batch) s.users.push_back(t.user);
  } else if (M > 0) {
    for (std::size_t n = 0; n < config.distill_users; ++n) {
      s.users.push_back(static_cast<Index>(uniform_index(rng, M)));
    }
  }
  if (config.distill_items == 0) {
    for (const auto& t : batch) {
      s.items.push_back(t.positive);
      s.items.push_back(t.negative);
    }
  } else if (N > 0) {
    for (std::size_t n = 0; n < config.distill_items; ++n) {
      s.items.push_back(static_cast<Index>(uniform_index(rng, N)));
    }
  }
  for (auto* v : {&s.users, &s.items}) {
    std::sort(v->begin(), v->end());
    v->erase(std::unique(v->begin(), v->end()), v->end());
  }
  if (M > 0 && N > 0) {
    for (std::size_t n = 0; n < config.distill_pairs; ++n) {
      const auto i = static_cast<Index>(uniform_index(rng, M));
      const auto j = static_cast<Index>(uniform_index(rng, N));
      s.pairs.emplace_back(i, j);
    }
  }
  return s;
}

LossBreakdown distill_loss_and_grads(const DistillSample& sample, const Dataset& train,
                                     const ForwardOutputs& outputs, const DistillWeights& w,
                                     bool detach_teacher, OutputGrads& grads) {
  LossBreakdown loss;
  const auto& E = outputs.user_student.attr;
  const auto& F = outputs.item_student.attr;
  const Index item_attr0 = outputs.num_user_attrs;
  const std::size_t d = static_cast<std::size_t>(outputs.teacher.user.dim());
  std::vector<double> diff(d);

  for (Index i : sample.users) {
    const auto& attrs = train.user_attrs[static_cast<std::size_t>(i)];
    const auto student = compose_entity_embedding(E, attrs, 0);
    const auto teacher = outputs.teacher.user.row(i);
    for (std::size_t c = 0; c < d; ++c) diff[c] = teacher[c] - student[c];
    loss.lu += dot(diff, diff);
    if (w.lambda == 0.0) continue;
    scatter(attrs, 0, -2.0 * w.lambda, diff, grads.user_student_attr);
    if (!detach_teacher) axpy(2.0 * w.lambda, diff, grads.teacher_user.row(i));
  }
  for (Index j : sample.items) {
    const auto& attrs = train.item_attrs[static_cast<std::size_t>(j)];
    const auto student = compose_entity_embedding(F, attrs, item_attr0);
    const auto teacher = outputs.teacher.item.row(j);
    for (std::size_t c = 0; c < d; ++c) diff[c] = teacher[c] - student[c];
    loss.lv += dot(diff, diff);
    if (w.mu == 0.0) continue;
    scatter(attrs, item_attr0, -2.0 * w.mu, diff, grads.item_student_attr);
    if (!detach_teacher) axpy(2.0 * w.mu, diff, grads.teacher_item.row(j));
  }
  for (const auto& [i, j] : sample.pairs) {
    const auto& uattrs = train.user_attrs[static_cast<std::size_t>(i)];
    const auto& iattrs = train.item_attrs[static_cast<std::size_t>(j)];
    const auto su = compose_entity_embedding(E, uattrs, 0);
    const auto sv = compose_entity_embedding(F, iattrs, item_attr0);
    const auto tu = outputs.teacher.user.row(i);
    const auto tv = outputs.teacher.item.row(j);
    const double r = dot(tu, tv) - dot(su, sv);
    loss.ls += r * r;
    if (w.eta == 0.0) continue;
    const double a = 2.0 * w.eta * r;
    scatter(uattrs, 0, -a, sv, grads.user_student_attr);
    scatter(iattrs, item_attr0, -a, su, grads.item_student_attr);
    if (!detach_teacher) {
      axpy(a, tv, grads.teacher_user.row(i));
      axpy(a, tu, grads.teacher_item.row(j));
    }
  }
  return loss;
}

void backpropagate_outputs(const ForwardOutputs& outputs, const OutputGrads& og, ParamGrads& grads) {
  const Index M = og.teacher_user.rows();
  const Index N = og.teacher_item.rows();
  const Index d = og.teacher_user.dim();
  {
    const EmbeddingTable attr_zero(outputs.teacher.attr.rows(), d);
    const auto g0 = backpropagate(outputs.teacher.trace,
                                  EmbeddingTable::stack({&og.teacher_user, &og.teacher_item,
                                                         &attr_zero}));
    grads.U.add_rows_from(0, g0.slice(0, M));
    grads.V.add_rows_from(0, g0.slice(M, N));
    grads.Y.add_rows_from(0, g0.slice(M + N, outputs.teacher.attr.rows()));
  }
  {
    const EmbeddingTable item_zero(N, d);
    const auto g0 = backpropagate(outputs.user_student.trace,
                                  EmbeddingTable::stack({&item_zero, &og.user_student_attr}));
    grads.V.add_rows_from(0, g0.slice(0, N));
    grads.E.add_rows_from(0, g0.slice(N, og.user_student_attr.rows()));
  }
  {
    const EmbeddingTable user_zero(M, d);
    const auto g0 = backpropagate(outputs.item_student.trace,
                                  EmbeddingTable::stack({&user_zero, &og.item_student_attr}));
    grads.U.add_rows_from(0, g0.slice(0, M));
    grads.F.add_rows_from(0, g0.slice(M, og.item_student_attr.rows()));
  }
}

LossBreakdown loss_and_grads(const PgdParams& params, const ModelGraphs& graphs,
                             const Dataset& train, std::span<const BprTriple> batch,
                             const DistillSample& sample, const TrainConfig& config,
                             ParamGrads* grads) {
  const auto outputs = forward(params, graphs);
  auto og = OutputGrads::zeros_like(outputs);
  ParamGrads local;
  ParamGrads& g = grads ? *grads : (local = ParamGrads::zeros_like(params));
  LossBreakdown loss = distill_loss_and_grads(sample, train, outputs, config.weights,
                                              config.detach_teacher, og);
  loss.bpr = bpr_loss_and_grads(batch, outputs, og);
  loss.reg = l2_loss_and_grads(params, config.gamma, g);
  backpropagate_outputs(outputs, og, g);
  return loss;
}

AdamState AdamState::for_params(const PgdParams& params) {
  AdamState s;
  s.first_moment = ParamGrads::zeros_like(params);
  s.second_moment = ParamGrads::zeros_like(params);
  return s;
}

void adam_step(PgdParams& params, AdamState& state, const ParamGrads& grads, double learning_rate) {
  const auto tables = params.tables();
  const auto gtabs = grads.tables();
  const auto m1 = state.first_moment.tables();
  const auto m2 = state.second_moment.tables();
  for (std::size_t t = 0; t < tables.size(); ++t) {
    PGD_REQUIRE(gtabs[t]->size() == tables[t]->size() && m1[t]->size() == tables[t]->size(),
                "gradient shape mismatch for table " + std::string(PgdParams::kTableNames[t]));
    if (!gtabs[t]->all_finite()) {
      throw NumericError("non-finite gradient in table " + std::string(PgdParams::kTableNames[t]) +
                         strprintf(" at step %ld", state.step + 1));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < tables.size(); ++t) {
    auto w = tables[t]->values();
    const auto g = gtabs[t]->values();
    auto m = m1[t]->values();
    auto v = m2[t]->values();
    for (std::size_t n = 0; n < w.size(); ++n) {
      m[n] = state.beta1 * m[n] + (1.0 - state.beta1) * g[n];
      v[n] = state.beta2 * v[n] + (1.0 - state.beta2) * g[n] * g[n];
      w[n] -= learning_rate * (m[n] / c1) / (std::sqrt(v[n] / c2) + state.epsilon);
    }
  }
}

std::string format_log_line(const EpochLog& e) {
  return strprintf("epoch=%d Lr=%.10g Lu=%.10g Lv=%.10g Ls=%.10g val_ndcg20=%s", e.epoch, e.lr,
                   e.lu, e.lv, e.ls,
                   e.val_ndcg20 ? strprintf("%.6f", *e.val_ndcg20).c_str() : "nan");
}

TrainResult train(const SplitBundle& split, const TrainConfig& config) {
  config.validate();
  const Dataset& data = split.train;
  const auto graphs = ModelGraphs::build(data, config.binarize_student_graph);

  TrainResult result;
  result.params = init_params(ModelDims::of(data, config.dim), config.layers, config.seed);
  result.params.binarize_student_graph = config.binarize_student_graph;
  if (config.epochs == 0) return result;

  PgdParams params = result.params;
  AdamState adam = AdamState::for_params(params);
  const InteractionIndex index(data);
  Rng rng(config.seed * 0x9E3779B97F4A7C15ull + 1);
  std::optional<double> best_val;
  bool have_best = false;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto triples =
        sample_triples(index, data.interactions, rng, config.negatives_per_positive);
    EpochLog entry;
    entry.epoch = epoch;
    std::size_t steps = 0;
    for (std::size_t b = 0; b < triples.size(); b += config.batch_size) {
      const std::span<const BprTriple> batch(
          triples.data() + b, std::min(config.batch_size, triples.size() - b));
      const auto sample = draw_distill_sample(batch, data, config, rng);
      auto grads = ParamGrads::zeros_like(params);
      const auto loss = loss_and_grads(params, graphs, data, batch, sample, config, &grads);
      if (!std::isfinite(loss.total(config.weights))) {
        result.diverged = true;
        result.message = strprintf("loss became non-finite at epoch %d", epoch);
      } else {
        try {
          adam_step(params, adam, grads, config.learning_rate);
        } catch (const NumericError& e) {
          result.diverged = true;
          result.message = e.what();
        }
      }
      if (result.diverged) {
        if (!have_best) result.params = params;  // last good: the update was not applied
        return result;
      }
      entry.lr += loss.lr();
      entry.lu += loss.lu;
      entry.lv += loss.lv;
      entry.ls += loss.ls;
      ++steps;
    }
    if (steps > 0) {
      const double inv = 1.0 / static_cast<double>(steps);
      entry.lr *= inv;
      entry.lu *= inv;
      entry.lv *= inv;
      entry.ls *= inv;
    }
    if (!split.val.empty() && epoch % config.eval_every == 0) {
      EvalSpec spec;
      spec.task = TaskKind::Warm;
      spec.ks = {20};
      const auto report = evaluate(split, forward(params, graphs), spec);
      entry.val_ndcg20 = report.ndcg[0];
      if (!best_val || *entry.val_ndcg20 > *best_val) {
        best_val = entry.val_ndcg20;
        result.params = params;
        result.best_epoch = epoch;
        have_best = true;
      }
    }
    result.log.push_back(entry);
  }
  if (!have_best) {
    result.params = params;
    result.best_epoch = config.epochs;
  }
  return result;
}

}  // namespace pgd
