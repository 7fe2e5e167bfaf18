// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "pgd/cli.hpp"
#include "pgd/eval.hpp"
#include "test_support.hpp"

namespace pgd {
namespace {

namespace fs = std::filesystem;
using testing::Dense;
using testing::to_dense;

// Pinned tolerances and budgets.
constexpr double kPropagationTol = 1e-12;
constexpr double kPropagationSeconds = 10.0;
constexpr double kGradStep = 1e-5;
constexpr double kGradTol = 1e-5;
constexpr double kGradSeconds = 60.0;
constexpr double kNewBothLift = 3.0;
constexpr double kNewSideLift = 2.0;
constexpr double kLiftSeconds = 600.0;
constexpr int kMaxLiftEpochs = 200;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Outcome propagation_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  int graphs = 0;
  while (graphs < 50) {
    const Index M = 2 + rng() % 20, N = 2 + rng() % 20, Du = 1 + rng() % 10, Dv = 1 + rng() % 10;
    if (M + N + Du + Dv > 64) continue;
    const double density = 0.05 + 0.4 * std::uniform_real_distribution<double>()(rng);
    const Dataset ds = testing::random_dataset(rng, M, N, Du, Dv, density, 3);
    const auto op = Propagator::from(build_teacher_graph(ds).adjacency);
    const Dense P = testing::row_normalize(testing::dense_teacher_adjacency(ds));
    const EmbeddingTable x = testing::random_table(rng, op->num_nodes(), 8);
    for (int L = 1; L <= 4; ++L) {
      const Dense sparse = to_dense(propagate(op, x, L).output());
      worst = std::max(worst, testing::max_abs(sparse - testing::dense_propagate(P, to_dense(x), L)));
    }
    ++graphs;
  }
  const double secs = seconds_since(t0);
  return {worst <= kPropagationTol && secs < kPropagationSeconds,
          "max_abs=" + fmt("%.3g", worst) + " seconds=" + fmt("%.2f", secs)};
}

Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  Index largest = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto g = testing::random_grad_problem(seed);
    largest = std::max(largest, g.ds.num_users + g.ds.num_items + g.ds.num_attrs());
    TrainConfig cfg;
    cfg.weights = {1.0, 1.0, 0.1};
    cfg.gamma = 0.01;
    cfg.detach_teacher = false;
    worst = std::max(worst, testing::gradient_check(g.params, g.ds, g.batch, g.sample, cfg,
                                                    kGradStep).worst);
  }
  const double secs = seconds_since(t0);
  return {worst < kGradTol && largest <= 30 && secs < kGradSeconds,
          "worst_rel=" + fmt("%.3g", worst) + " nodes=" + std::to_string(largest) +
              " seconds=" + fmt("%.2f", secs)};
}

Outcome student_graph_identity() {
  std::mt19937_64 rng(303);
  int mismatches = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const Index M = 1 + rng() % 12, N = 1 + rng() % 12, Du = 1 + rng() % 6, Dv = 1 + rng() % 6;
    const Dataset ds = testing::random_dataset(rng, M, N, Du, Dv, 0.35, 3);
    const Dense R = testing::rating_matrix(ds);
    const Dense Su = R.transpose() * testing::user_attr_matrix(ds);
    const Dense Sv = R * testing::item_attr_matrix(ds);
    const Dense Au = testing::dense_of(build_student_graph(ds, StudentSide::User).adjacency);
    const Dense Av = testing::dense_of(build_student_graph(ds, StudentSide::Item).adjacency);
    const bool ok = Au.topLeftCorner(N, N).isZero(0) && Au.bottomRightCorner(Du, Du).isZero(0) &&
                    Au.topRightCorner(N, Du) == Su && Au.bottomLeftCorner(Du, N) == Su.transpose() &&
                    Av.topLeftCorner(M, M).isZero(0) && Av.bottomRightCorner(Dv, Dv).isZero(0) &&
                    Av.topRightCorner(M, Dv) == Sv && Av.bottomLeftCorner(Dv, M) == Sv.transpose();
    if (!ok) ++mismatches;
  }
  return {mismatches == 0, "instances=100 mismatches=" + std::to_string(mismatches)};
}

// Enumerates the whole ranking position by position.
std::pair<double, double> brute_metrics(const std::vector<Index>& ranking,
                                        const std::vector<Index>& relevant, int k) {
  const std::set<Index> rel(relevant.begin(), relevant.end());
  double hits = 0.0, dcg = 0.0, idcg = 0.0;
  for (std::size_t p = 0; p < ranking.size(); ++p) {
    if (static_cast<int>(p) >= k) break;
    if (rel.count(ranking[p])) {
      hits += 1.0;
      dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
    }
  }
  for (std::size_t p = 0; p < rel.size() && static_cast<int>(p) < k; ++p) {
    idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  }
  return {hits / static_cast<double>(rel.size()), dcg / idcg};
}

Outcome metric_oracle() {
  std::mt19937_64 rng(404);
  int mismatches = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + rng() % 60;
    std::vector<Index> ranking(n);
    std::iota(ranking.begin(), ranking.end(), 0);
    std::shuffle(ranking.begin(), ranking.end(), rng);
    std::vector<Index> relevant;
    for (Index i = 0; i < static_cast<Index>(n); ++i) {
      if (rng() % 5 == 0) relevant.push_back(i);
    }
    if (relevant.empty()) relevant.push_back(static_cast<Index>(rng() % n));
    const int k = 1 + static_cast<int>(rng() % 30);
    const auto [hr, ndcg] = brute_metrics(ranking, relevant, k);
    if (*hr_at_k(ranking, relevant, k) != hr || *ndcg_at_k(ranking, relevant, k) != ndcg) {
      ++mismatches;
    }
  }
  bool spot = true;
  const std::vector<Index> ranking{4, 7, 2, 9, 1};
  const std::vector<Index> relevant{2};
  for (int k = 3; k <= 5; ++k) spot = spot && *ndcg_at_k(ranking, relevant, k) == 0.5;
  spot = spot && *ndcg_at_k(ranking, relevant, 2) == 0.0;
  return {mismatches == 0 && spot, "instances=200 mismatches=" + std::to_string(mismatches) +
                                       " rank3_spot=" + (spot ? "ok" : "wrong")};
}

Outcome distillation_fixed_point() {
  std::mt19937_64 rng(505);
  double worst_loss = 0.0, worst_grad = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const Dataset ds = testing::random_dataset(rng, 6, 7, 4, 4, 0.4, 3);
    const PgdParams p = init_params(ModelDims::of(ds, 6), {}, 500 + rep);
    ForwardOutputs out = forward(p, ModelGraphs::build(ds));
    // Overwrite teacher outputs with what the students produce for each entity.
    for (Index i = 0; i < ds.num_users; ++i) {
      const auto s = compose_entity_embedding(out.user_student.attr, ds.user_attrs[i], 0);
      std::copy(s.begin(), s.end(), out.teacher.user.row(i).begin());
    }
    for (Index j = 0; j < ds.num_items; ++j) {
      const auto s = compose_entity_embedding(out.item_student.attr, ds.item_attrs[j],
                                              out.num_user_attrs);
      std::copy(s.begin(), s.end(), out.teacher.item.row(j).begin());
    }
    DistillSample sample;
    sample.users.resize(ds.num_users);
    std::iota(sample.users.begin(), sample.users.end(), 0);
    sample.items.resize(ds.num_items);
    std::iota(sample.items.begin(), sample.items.end(), 0);
    for (Index i = 0; i < ds.num_users; ++i) {
      for (Index j = 0; j < ds.num_items; ++j) sample.pairs.emplace_back(i, j);
    }
    auto og = OutputGrads::zeros_like(out);
    const auto loss = distill_loss_and_grads(sample, ds, out, {100.0, 1.0, 0.01}, false, og);
    worst_loss = std::max({worst_loss, loss.lu, loss.lv, loss.ls});
    auto grads = ParamGrads::zeros_like(p);
    backpropagate_outputs(out, og, grads);
    for (const auto* t : grads.tables()) {
      for (double v : t->values()) worst_grad = std::max(worst_grad, std::abs(v));
    }
  }
  return {worst_loss == 0.0 && worst_grad == 0.0,
          "max_loss=" + fmt("%g", worst_loss) + " max_grad=" + fmt("%g", worst_grad)};
}

SplitBundle lift_split() {
  return generate_split(make_synthetic({}), {0.3, 0.3, 0.1}, 7);
}

TrainConfig lift_config() {
  TrainConfig cfg;
  cfg.weights = {1.0, 1.0, 0.01};
  cfg.layers = LayerCounts::uniform(2);
  cfg.epochs = kMaxLiftEpochs;
  cfg.learning_rate = 0.005;
  cfg.batch_size = 512;
  cfg.seed = 1;
  return cfg;
}

Outcome synthetic_lift() {
  const auto t0 = std::chrono::steady_clock::now();
  const SplitBundle split = lift_split();
  const TrainConfig cfg = lift_config();
  const TrainResult result = train(split, cfg);
  std::string detail;
  bool pass = cfg.epochs <= kMaxLiftEpochs && !result.diverged;
  const std::map<TaskKind, double> need{{TaskKind::NewUser, kNewSideLift},
                                        {TaskKind::NewItem, kNewSideLift},
                                        {TaskKind::NewBoth, kNewBothLift}};
  for (const auto& [task, factor] : need) {
    const EvalReport r = evaluate(split, result.params, {task, {20}, false});
    const double lift = r.ndcg[0] / r.random_ndcg[0];
    pass = pass && lift > factor;
    detail += std::string(task_token(task)) + "=" + fmt("%.4f", r.ndcg[0]) + "/" +
              fmt("%.4f", r.random_ndcg[0]) + "(x" + fmt("%.2f", lift) + ") ";
  }
  const double secs = seconds_since(t0);
  pass = pass && secs < kLiftSeconds;
  return {pass, detail + "best_epoch=" + std::to_string(result.best_epoch) +
                    " seconds=" + fmt("%.1f", secs)};
}

int cli(const std::vector<std::string>& args, std::string* out_text = nullptr) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (out_text) *out_text = out.str();
  if (code != 0) std::cerr << "pgd";
  if (code != 0) {
    for (const auto& a : args) std::cerr << ' ' << a;
    std::cerr << "\n" << err.str();
  }
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Synthetic raw files in dir, split into dir/split.
bool prepare_split(const fs::path& dir, const std::string& seed) {
  return cli({"synth", "--out-dir", dir.string()}) == 0 &&
         cli({"split", "--interactions", (dir / "interactions.tsv").string(), "--user-attrs",
              (dir / "user_attrs.tsv").string(), "--item-attrs", (dir / "item_attrs.tsv").string(),
              "--out", (dir / "split").string(), "--seed", seed}) == 0;
}

Outcome depth_sweep() {
  const fs::path dir = testing::scratch_dir("accept_sweep");
  if (!prepare_split(dir, "7")) return {false, "split failed"};
  std::string table;
  const int code = cli({"sweep", "--split", (dir / "split").string(), "--layers", "1,2,3,4",
                        "--epochs", "20", "--dim", "16", "--lambda", "1", "--mu", "1", "--eta", "0.01",
                        "--tasks", "nu,ni,nn"},
                       &table);
  // The depth trend is informational.
  std::cerr << table;
  std::map<std::string, std::set<std::string>> depths;
  std::size_t rows = 0, ok_rows = 0;
  std::istringstream in(table);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string c; std::getline(ls, c, '\t');) f.push_back(c);
    if (f.size() != 8) continue;
    ++rows;
    depths[f[4]].insert(f[3]);
    if (f[7] == "ok") ++ok_rows;
  }
  bool pass = code == 0 && depths.size() == 3 && rows == 12 && ok_rows == 12;
  for (const auto& [task, ls] : depths) pass = pass && ls.size() == 4;
  std::string per_task;
  for (const auto& [task, ls] : depths) per_task += " " + task + "=" + std::to_string(ls.size());
  return {pass, "rows=" + std::to_string(rows) + " ok=" + std::to_string(ok_rows) + per_task};
}

Outcome determinism() {
  std::string ckpt[2], report[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = testing::scratch_dir("accept_det" + std::to_string(run));
    if (!prepare_split(dir, "11")) return {false, "split failed"};
    const fs::path ck = dir / "model.ckpt";
    if (cli({"train", "--split", (dir / "split").string(), "--out", ck.string(), "--epochs", "3",
             "--dim", "16", "--seed", "9", "--preset", "yelp"}) != 0 ||
        cli({"eval", "--split", (dir / "split").string(), "--checkpoint", ck.string(), "--out",
             (dir / "report.txt").string()}) != 0) {
      return {false, "pipeline failed"};
    }
    ckpt[run] = slurp(ck);
    report[run] = slurp(dir / "report.txt");
  }
  const bool pass = !ckpt[0].empty() && !report[0].empty() && ckpt[0] == ckpt[1] &&
                    report[0] == report[1];
  return {pass, std::string("checkpoint=") + (ckpt[0] == ckpt[1] ? "same" : "differs") +
                    " report=" + (report[0] == report[1] ? "same" : "differs") +
                    " bytes=" + std::to_string(ckpt[0].size())};
}

Outcome split_statistics_check() {
  const Dataset ds = make_synthetic({});
  const SplitBundle split = generate_split(ds, {0.3, 0.3, 0.1}, 7);
  const double nu = static_cast<double>(split.new_user_ids.size());
  const double ni = static_cast<double>(split.new_item_ids.size());
  const double val = static_cast<double>(split.val.size());
  const double residual = val + static_cast<double>(split.train.interactions.size());
  const bool pass = std::abs(nu - 0.3 * ds.num_users) <= 1.0 &&
                    std::abs(ni - 0.3 * ds.num_items) <= 1.0 &&
                    std::abs(val - 0.1 * residual) <= 1.0;
  return {pass, "new_users=" + fmt("%.0f", nu) + " new_items=" + fmt("%.0f", ni) +
                    " val=" + fmt("%.0f", val) + " residual=" + fmt("%.0f", residual)};
}

}  // namespace
}  // namespace pgd

int main(int argc, char** argv) {
  setenv("PGD_THREADS", "1", 1);
  const std::vector<std::pair<std::string, std::function<pgd::Outcome()>>> criteria{
      {"propagation_oracle", pgd::propagation_oracle},
      {"gradient_check", pgd::gradient_check},
      {"student_graph_identity", pgd::student_graph_identity},
      {"metric_oracle", pgd::metric_oracle},
      {"distillation_fixed_point", pgd::distillation_fixed_point},
      {"synthetic_cold_start_lift", pgd::synthetic_lift},
      {"depth_sweep", pgd::depth_sweep},
      {"determinism", pgd::determinism},
      {"split_statistics", pgd::split_statistics_check},
  };
  // Optional filter: run only the criteria named on the command line.
  std::set<std::string> only(argv + 1, argv + argc);
  int failures = 0, index = 0;
  for (const auto& [name, check] : criteria) {
    ++index;
    if (!only.empty() && !only.count(name)) continue;
    pgd::Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS " : "FAIL ") << index << ' ' << name << ": " << o.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
