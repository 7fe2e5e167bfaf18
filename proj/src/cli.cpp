#include "pgd/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "pgd/data.hpp"
#include "pgd/eval.hpp"
#include "pgd/graph.hpp"
#include "pgd/model.hpp"
#include "pgd/train.hpp"

namespace pgd {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    tok.erase(0, tok.find_first_not_of(" \t"));
    tok.erase(tok.find_last_not_of(" \t") + 1);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

template <typename T>
std::vector<T> parse_list(const std::string& s, const char* what) {
  std::vector<T> out;
  for (const auto& tok : split_list(s)) {
    std::size_t used = 0;
    try {
      if constexpr (std::is_same_v<T, int>) {
        out.push_back(std::stoi(tok, &used));
      } else {
        out.push_back(std::stod(tok, &used));
      }
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size()) throw UsageError(strprintf("bad %s value '%s'", what, tok.c_str()));
  }
  return out;
}

// Training flags shared by `train` and `sweep`.
struct TrainFlags {
  TrainConfig config;
  std::string preset;
  int layers = 2;
  int user_student_layers = 0;
  int item_student_layers = 0;
  double lambda = 0, mu = 0, eta = 0;
  CLI::Option* lambda_opt = nullptr;
  CLI::Option* mu_opt = nullptr;
  CLI::Option* eta_opt = nullptr;

  void add_to(CLI::App* app, bool scalar_grid_flags) {
    auto& c = config;
    app->add_option("--preset", preset, "distillation weight preset")
        ->check(CLI::IsMember({"yelp", "xing", "amazon"}));
    if (scalar_grid_flags) {
      app->add_option("--layers", layers, "propagation depth for teacher and students")
          ->check(CLI::PositiveNumber);
      lambda_opt = app->add_option("--lambda", lambda, "user distillation weight");
      mu_opt = app->add_option("--mu", mu, "item distillation weight");
      eta_opt = app->add_option("--eta", eta, "prediction distillation weight");
    }
    app->add_option("--user-student-layers", user_student_layers, "override user student depth");
    app->add_option("--item-student-layers", item_student_layers, "override item student depth");
    app->add_option("--epochs", c.epochs, "training epochs")->capture_default_str();
    app->add_option("--batch-size", c.batch_size, "BPR triples per step")->capture_default_str();
    app->add_option("--lr", c.learning_rate, "Adam learning rate")->capture_default_str();
    app->add_option("--gamma", c.gamma, "L2 weight on free embeddings")->capture_default_str();
    app->add_option("--seed", c.seed, "initialization and sampling seed")->capture_default_str();
    app->add_option("--dim", c.dim, "embedding dimension")->capture_default_str();
    app->add_option("--eval-every", c.eval_every, "epochs between validation runs")
        ->capture_default_str();
    app->add_option("--negatives", c.negatives_per_positive, "negatives per positive")
        ->capture_default_str();
    app->add_option("--distill-users", c.distill_users, "users per step for Lu (0: batch users)");
    app->add_option("--distill-items", c.distill_items, "items per step for Lv (0: batch items)");
    app->add_option("--distill-pairs", c.distill_pairs, "sampled pairs per step for Ls")
        ->capture_default_str();
    app->add_flag("--no-detach-teacher", "let distillation gradients reach the teacher");
    app->add_flag("--binarize-student-graph", c.binarize_student_graph,
                  "use 0/1 student edge weights instead of counts");
  }

  // Applies preset, then explicit weights, then layer overrides.
  TrainConfig resolve(const CLI::App* app) const {
    TrainConfig c = config;
    if (!preset.empty()) c.weights = *distill_preset(preset);
    if (lambda_opt && lambda_opt->count()) c.weights.lambda = lambda;
    if (mu_opt && mu_opt->count()) c.weights.mu = mu;
    if (eta_opt && eta_opt->count()) c.weights.eta = eta;
    c.detach_teacher = app->count("--no-detach-teacher") == 0;
    c.layers = LayerCounts::uniform(layers);
    if (user_student_layers > 0) c.layers.user_student = user_student_layers;
    if (item_student_layers > 0) c.layers.item_student = item_student_layers;
    return c;
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw DataError("cannot write " + path);
}

std::vector<TaskKind> parse_tasks(const std::string& s) {
  std::vector<TaskKind> out;
  for (const auto& tok : split_list(s)) {
    try {
      out.push_back(parse_task(tok));
    } catch (const ContractError& e) {
      throw UsageError(e.what());
    }
  }
  if (out.empty()) throw UsageError("no tasks requested");
  return out;
}

std::vector<int> parse_ks(const std::string& s) {
  auto ks = parse_list<int>(s, "K");
  if (ks.empty()) throw UsageError("no K values requested");
  for (int k : ks) {
    if (k < 1) throw UsageError("K values must be positive");
  }
  return ks;
}

// Feeds config-file keys as long flags unless the command line already sets them.
std::vector<std::string> merge_config(const CLI::App& sub, std::vector<std::string> args) {
  std::string path;
  for (std::size_t n = 0; n < args.size(); ++n) {
    if (args[n] == "--config" && n + 1 < args.size()) path = args[n + 1];
    if (args[n].rfind("--config=", 0) == 0) path = args[n].substr(9);
  }
  if (path.empty()) return args;
  std::map<std::string, std::string> kv;
  try {
    kv = read_config_file(path);
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
  auto given = [&](const std::string& flag) {
    return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
  };
  for (const auto& [key, value] : kv) {
    const std::string flag = "--" + key;
    const CLI::Option* opt = sub.get_option_no_throw(flag);
    if (opt == nullptr || key == "config") {
      throw UsageError("unknown config key '" + key + "' for " + sub.get_name());
    }
    if (given(flag)) continue;
    if (opt->get_expected_min() == 0) {
      if (value == "true" || value == "1") {
        args.push_back(flag);
      } else if (value != "false" && value != "0") {
        throw UsageError("config key '" + key + "' expects true or false");
      }
    } else {
      args.push_back(flag);
      args.push_back(value);
    }
  }
  return args;
}

void print_train_log(const TrainResult& result, std::ostream& out, const std::string& log_path) {
  std::string text;
  for (const auto& e : result.log) text += format_log_line(e) + "\n";
  out << text;
  if (!log_path.empty()) write_text(log_path, text);
}

}  // namespace

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw DataError(strprintf("%s:%zu: expected key=value", path.c_str(), lineno));
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Privileged graph distillation for cold-start recommendation", "pgd"};
  app.require_subcommand(1);

  // split
  auto* split_cmd = app.add_subcommand("split", "build the cold-start train/val/test split");
  std::string interactions_path, user_attrs_path, item_attrs_path, split_out;
  SplitFractions fractions;
  std::uint64_t split_seed = 7;
  split_cmd->add_option("--interactions", interactions_path, "user<TAB>item file")
      ->required()->check(CLI::ExistingFile);
  split_cmd->add_option("--user-attrs", user_attrs_path, "user attribute file")
      ->required()->check(CLI::ExistingFile);
  split_cmd->add_option("--item-attrs", item_attrs_path, "item attribute file")
      ->required()->check(CLI::ExistingFile);
  split_cmd->add_option("--out", split_out, "output split directory")->required();
  split_cmd->add_option("--new-user-frac", fractions.new_user)->capture_default_str();
  split_cmd->add_option("--new-item-frac", fractions.new_item)->capture_default_str();
  split_cmd->add_option("--val-frac", fractions.val)->capture_default_str();
  split_cmd->add_option("--seed", split_seed)->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "train teacher and students jointly");
  std::string split_dir, checkpoint_out, log_path;
  TrainFlags train_flags;
  train_cmd->add_option("--split", split_dir, "split directory")
      ->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--out", checkpoint_out, "checkpoint path")->required();
  train_cmd->add_option("--log", log_path, "training log path");
  train_flags.add_to(train_cmd, true);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "full-ranking HR@K / NDCG@K evaluation");
  std::string eval_split, checkpoint_in, tasks_arg = "warm,nu,ni,nn", ks_arg = "10,20,50";
  std::string report_out, json_out;
  bool per_interaction = false;
  eval_cmd->add_option("--split", eval_split, "split directory")
      ->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--checkpoint", checkpoint_in, "checkpoint path")
      ->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--tasks", tasks_arg, "comma list of warm,nu,ni,nn")->capture_default_str();
  eval_cmd->add_option("--k", ks_arg, "comma list of cutoffs")->capture_default_str();
  eval_cmd->add_flag("--per-interaction", per_interaction, "one query per test interaction");
  eval_cmd->add_option("--out", report_out, "also write the report here");
  eval_cmd->add_option("--json", json_out, "structured report path");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "grid sweep over distillation weights and depth");
  std::string sweep_split, grid_lambda, grid_mu, grid_eta, grid_layers;
  std::string sweep_tasks = "nu,ni,nn", sweep_out;
  TrainFlags sweep_flags;
  sweep_cmd->add_option("--split", sweep_split, "split directory")
      ->required()->check(CLI::ExistingDirectory);
  sweep_cmd->add_option("--lambda", grid_lambda, "comma list of lambda values");
  sweep_cmd->add_option("--mu", grid_mu, "comma list of mu values");
  sweep_cmd->add_option("--eta", grid_eta, "comma list of eta values");
  sweep_cmd->add_option("--layers", grid_layers, "comma list of depths");
  sweep_cmd->add_option("--tasks", sweep_tasks, "tasks to report")->capture_default_str();
  sweep_cmd->add_option("--out", sweep_out, "also write the table here");
  sweep_flags.add_to(sweep_cmd, false);

  // inspect
  auto* inspect_cmd = app.add_subcommand("inspect", "print checkpoint or graph statistics");
  std::string inspect_ckpt, inspect_split, dump_path, dump_graph = "teacher";
  bool inspect_binarize = false;
  inspect_cmd->add_option("--checkpoint", inspect_ckpt)->check(CLI::ExistingFile);
  inspect_cmd->add_option("--split", inspect_split)->check(CLI::ExistingDirectory);
  inspect_cmd->add_option("--dump-edges", dump_path, "write edges.tsv for --graph");
  inspect_cmd->add_option("--graph", dump_graph)
      ->check(CLI::IsMember({"teacher", "user", "item"}))->capture_default_str();
  inspect_cmd->add_flag("--binarize-student-graph", inspect_binarize);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "write a cluster-structured synthetic dataset");
  SyntheticConfig synth;
  std::string synth_out;
  synth_cmd->add_option("--out-dir", synth_out)->required();
  synth_cmd->add_option("--users", synth.num_users)->capture_default_str();
  synth_cmd->add_option("--items", synth.num_items)->capture_default_str();
  synth_cmd->add_option("--clusters", synth.num_clusters)->capture_default_str();
  synth_cmd->add_option("--attr-fields", synth.attr_fields)->capture_default_str();
  synth_cmd->add_option("--attr-accuracy", synth.attr_accuracy)->capture_default_str();
  synth_cmd->add_option("--per-user", synth.interactions_per_user)->capture_default_str();
  synth_cmd->add_option("--in-cluster-prob", synth.in_cluster_prob)->capture_default_str();
  synth_cmd->add_option("--popularity-skew", synth.popularity_skew)->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();

  for (auto* sub : {split_cmd, train_cmd, eval_cmd, sweep_cmd, inspect_cmd, synth_cmd}) {
    sub->add_option("--config", "key=value file; command-line flags take precedence");
  }

  std::vector<std::string> args = raw_args;
  try {
    if (!args.empty()) {
      if (auto* sub = app.get_subcommand_no_throw(args[0])) {
        std::vector<std::string> rest(args.begin() + 1, args.end());
        rest = merge_config(*sub, std::move(rest));
        args.resize(1);
        args.insert(args.end(), rest.begin(), rest.end());
      }
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*split_cmd) {
      const auto loaded = load_interactions(interactions_path);
      if (loaded.duplicates > 0) {
        err << "warning: dropped " << loaded.duplicates << " duplicate interaction lines\n";
      }
      const auto dataset =
          build_dataset(loaded.pairs, load_attributes(user_attrs_path, EntityKind::User),
                        load_attributes(item_attrs_path, EntityKind::Item));
      const auto bundle = generate_split(dataset, fractions, split_seed);
      for (const auto& w : bundle.warnings) err << "warning: " << w << '\n';
      save_split(bundle, split_out);
      out << format_split_table(split_statistics(bundle));
      return kExitOk;
    }

    if (*train_cmd) {
      TrainConfig config = train_flags.resolve(train_cmd);
      try {
        config.validate();
      } catch (const ContractError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
      }
      const auto split = load_split(split_dir);
      const auto result = train(split, config);
      print_train_log(result, out, log_path);
      save_checkpoint(result.params, checkpoint_out);
      if (result.diverged) {
        err << "error: training diverged: " << result.message
            << " (wrote last good checkpoint)\n";
        return kExitRuntime;
      }
      return kExitOk;
    }

    if (*eval_cmd) {
      std::vector<TaskKind> tasks;
      std::vector<int> ks;
      try {
        tasks = parse_tasks(tasks_arg);
        ks = parse_ks(ks_arg);
      } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
      }
      const auto split = load_split(eval_split);
      const auto params = load_checkpoint(checkpoint_in);
      check_compatible(params, split.train);
      const auto graphs = ModelGraphs::build(split.train, params.binarize_student_graph);
      const auto outputs = forward(params, graphs);
      const auto id = checkpoint_fingerprint(params);
      std::vector<EvalReport> reports;
      std::string text;
      for (TaskKind task : tasks) {
        EvalSpec spec{task, ks, per_interaction};
        auto report = evaluate(split, outputs, spec);
        report.checkpoint_id = id;
        text += format_report(report);
        reports.push_back(std::move(report));
      }
      out << text;
      if (!report_out.empty()) write_text(report_out, text);
      if (!json_out.empty()) write_text(json_out, report_json(reports));
      return kExitOk;
    }

    if (*sweep_cmd) {
      TrainConfig base = sweep_flags.resolve(sweep_cmd);
      std::vector<double> lambdas, mus, etas;
      std::vector<int> depths;
      std::vector<TaskKind> tasks;
      try {
        if (grid_lambda.empty() && grid_mu.empty() && grid_eta.empty() && grid_layers.empty()) {
          throw UsageError("empty grid: give at least one of --lambda --mu --eta --layers");
        }
        lambdas = grid_lambda.empty() ? std::vector{base.weights.lambda}
                                      : parse_list<double>(grid_lambda, "lambda");
        mus = grid_mu.empty() ? std::vector{base.weights.mu} : parse_list<double>(grid_mu, "mu");
        etas = grid_eta.empty() ? std::vector{base.weights.eta}
                                : parse_list<double>(grid_eta, "eta");
        depths = grid_layers.empty() ? std::vector{base.layers.teacher}
                                     : parse_list<int>(grid_layers, "layers");
        if (lambdas.empty() || mus.empty() || etas.empty() || depths.empty()) {
          throw UsageError("empty grid");
        }
        tasks = parse_tasks(sweep_tasks);
        base.validate();
      } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
      }
      const auto split = load_split(sweep_split);
      std::string table = "lambda\tmu\teta\tlayers\ttask\thr20\tndcg20\tstatus\n";
      out << table;
      auto emit = [&](const std::string& row) {
        out << row;
        out.flush();
        table += row;
      };
      for (double lambda : lambdas) {
        for (double mu : mus) {
          for (double eta : etas) {
            for (int depth : depths) {
              TrainConfig c = base;
              c.weights = {lambda, mu, eta};
              c.layers = LayerCounts::uniform(depth);
              const auto prefix = strprintf("%g\t%g\t%g\t%d\t", lambda, mu, eta, depth);
              try {
                c.validate();
                const auto result = train(split, c);
                if (result.diverged) throw NumericError(result.message);
                const auto graphs = ModelGraphs::build(split.train, c.binarize_student_graph);
                const auto outputs = forward(result.params, graphs);
                for (TaskKind task : tasks) {
                  const auto r = evaluate(split, outputs, EvalSpec{task, {20}, false});
                  emit(prefix + strprintf("%s\t%.6f\t%.6f\tok\n",
                                          std::string(task_token(task)).c_str(), r.hr[0],
                                          r.ndcg[0]));
                }
              } catch (const std::exception& e) {
                err << "warning: grid point " << prefix << "failed: " << e.what() << '\n';
                for (TaskKind task : tasks) {
                  emit(prefix + std::string(task_token(task)) + "\tnan\tnan\tfailed\n");
                }
              }
            }
          }
        }
      }
      if (!sweep_out.empty()) write_text(sweep_out, table);
      return kExitOk;
    }

    if (*inspect_cmd) {
      if (inspect_ckpt.empty() && inspect_split.empty()) {
        err << "error: inspect needs --checkpoint or --split\n";
        return kExitUsage;
      }
      if (!inspect_ckpt.empty()) {
        const auto p = load_checkpoint(inspect_ckpt);
        out << strprintf("checkpoint %s\n", checkpoint_fingerprint(p).c_str())
            << strprintf("M=%d N=%d D_u=%d D_v=%d d=%d\n", p.dims.num_users, p.dims.num_items,
                         p.dims.num_user_attrs, p.dims.num_item_attrs, p.dims.dim)
            << strprintf("layers teacher=%d user_student=%d item_student=%d\n", p.layers.teacher,
                         p.layers.user_student, p.layers.item_student)
            << strprintf("seed=%llu binarize_student_graph=%d\n",
                         static_cast<unsigned long long>(p.seed), p.binarize_student_graph ? 1 : 0);
        for (std::size_t t = 0; t < 5; ++t) {
          const auto* table = p.tables()[t];
          double sq = 0.0;
          for (double v : table->values()) sq += v * v;
          out << strprintf("%s rows=%d frobenius=%.6f\n",
                           std::string(PgdParams::kTableNames[t]).c_str(), table->rows(),
                           std::sqrt(sq));
        }
      }
      if (!inspect_split.empty()) {
        const auto split = load_split(inspect_split);
        out << format_split_table(split_statistics(split));
        const auto graphs = ModelGraphs::build(split.train, inspect_binarize);
        auto describe = [&](const char* name, const SparseAdjacency& a) {
          out << strprintf("graph %s nodes=%d stored_edges=%zu\n", name, a.num_nodes,
                           a.num_stored());
        };
        describe("teacher", graphs.teacher.adjacency);
        describe("user", graphs.user_student.adjacency);
        describe("item", graphs.item_student.adjacency);
        if (!dump_path.empty()) {
          std::ofstream f(dump_path, std::ios::binary);
          const auto& adj = dump_graph == "teacher" ? graphs.teacher.adjacency
                            : dump_graph == "user"  ? graphs.user_student.adjacency
                                                    : graphs.item_student.adjacency;
          dump_edges(adj, f);
          if (!f) throw DataError("cannot write " + dump_path);
        }
      }
      return kExitOk;
    }

    if (*synth_cmd) {
      const auto ds = make_synthetic(synth);
      std::filesystem::create_directories(synth_out);
      const std::filesystem::path dir(synth_out);
      write_dataset_files(ds, dir / "interactions.tsv", dir / "user_attrs.tsv",
                          dir / "item_attrs.tsv");
      out << strprintf("users=%d items=%d interactions=%zu user_attrs=%d item_attrs=%d\n",
                       ds.num_users, ds.num_items, ds.interactions.size(), ds.num_user_attrs,
                       ds.num_item_attrs);
      return kExitOk;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace pgd
