#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "longtail/experiment.hpp"
#include "longtail/rng.hpp"
#include "longtail/serialize.hpp"
#include "longtail/verify.hpp"

namespace fs = std::filesystem;
using namespace longtail;

namespace {

// exit codes: 0 ok, 2 config, 3 data, 4 numeric/state, 5 verification
constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kDataError = 3;
constexpr int kNumericError = 4;
constexpr int kVerifyFailed = 5;

struct CommonOpts {
  std::string config_path;
  std::string output_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool parallel = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required = true) {
  cmd->add_option("-c,--config", opts.config_path, "experiment config (JSON)")
      ->required(config_required);
  cmd->add_option("-o,--output-dir", opts.output_dir, "override output directory");
  cmd->add_option("--seed", opts.seed, "override the config seed")
      ->each([&](const std::string&) { opts.seed_set = true; });
  cmd->add_flag("--parallel", opts.parallel, "per-group backward on threads");
}

ExperimentConfig resolve_config(const CommonOpts& opts) {
  ExperimentConfig cfg = load_experiment_config(opts.config_path);
  if (opts.seed_set) {
    cfg.seed = opts.seed;
    cfg.train.seed = opts.seed;
  }
  if (!opts.output_dir.empty()) cfg.output_dir = opts.output_dir;
  if (opts.parallel) cfg.train.sequential = false;
  cfg.validate();
  return cfg;
}

void print_report_summary(const MetricsReport& rep) {
  std::cout << report_to_text(rep);
}

int run_guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const ArgumentError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const StateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumericError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Long-tail sequential recommender: deconfounded gradient aggregation "
               "with per-group plugin networks"};
  app.require_subcommand(1);

  CommonOpts run_opts, ingest_opts, group_opts, s1_opts, s2_opts, eval_opts, synth_opts;

  auto* run = app.add_subcommand("run", "full pipeline: ingest, group, two-stage train, evaluate");
  add_common(run, run_opts);

  auto* ingest = app.add_subcommand("ingest", "parse the dataset and write the sampled CSV");
  add_common(ingest, ingest_opts);

  auto* group = app.add_subcommand("group", "compute activeness groups and export the CSV");
  add_common(group, group_opts);

  auto* synth = app.add_subcommand("generate-synth", "write a synthetic interaction log");
  add_common(synth, synth_opts);

  auto* s1 = app.add_subcommand("train-stage1", "train the trunk with gradient aggregation");
  add_common(s1, s1_opts);

  auto* s2 = app.add_subcommand("train-stage2", "train per-group plugins on a stage-1 trunk");
  add_common(s2, s2_opts);
  std::string trunk_path;
  s2->add_option("--trunk", trunk_path, "stage-1 checkpoint (default: <out>/stage1_final.ckpt)");

  auto* eval = app.add_subcommand("evaluate", "score the test split from a checkpoint");
  add_common(eval, eval_opts);
  std::string eval_ckpt;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint to evaluate (default: <out>/final.ckpt)");

  auto* verify = app.add_subcommand("verify", "run an oracle suite");
  std::string suite = "all";
  verify->add_option("suite", suite, "gradients | aggregation | plugins | metrics | all");

  CLI11_PARSE(app, argc, argv);

  if (verify->parsed()) {
    return run_guarded([&] {
      bool all_ok = true;
      for (const auto& r : run_verify(suite)) {
        std::cout << (r.passed ? "PASS" : "FAIL") << "  " << r.suite << "  " << r.detail
                  << "\n";
        all_ok = all_ok && r.passed;
      }
      return all_ok ? kOk : kVerifyFailed;
    });
  }

  if (run->parsed()) {
    return run_guarded([&] {
      ExperimentConfig cfg = resolve_config(run_opts);
      ExperimentResult res = run_experiment(cfg);
      print_report_summary(res.report);
      std::cout << "artifacts in " << cfg.output_dir << "\n";
      return kOk;
    });
  }

  if (ingest->parsed()) {
    return run_guarded([&] {
      ExperimentConfig cfg = resolve_config(ingest_opts);
      PreparedData prep = prepare_data(cfg);
      fs::create_directories(cfg.output_dir);
      const fs::path dir(cfg.output_dir);
      save_interactions_csv(prep.log, (dir / "interactions.csv").string());
      save_sampled_csv(prep.data, (dir / "sampled.csv").string());
      std::cout << "users: " << prep.log.num_users() << "\nitems: " << prep.log.num_items()
                << "\ninteractions: " << prep.log.records.size()
                << "\ndropped users (<2 interactions): " << prep.dropped_users
                << "\ntrain samples: " << prep.data.train.size()
                << "\ntest samples: " << prep.data.test.size() << "\n";
      if (prep.data.sampled_with_replacement)
        std::cout << "note: some candidate pools ran short; sampled with replacement\n";
      return kOk;
    });
  }

  if (group->parsed()) {
    return run_guarded([&] {
      ExperimentConfig cfg = resolve_config(group_opts);
      PreparedData prep = prepare_data(cfg);
      fs::create_directories(cfg.output_dir);
      save_assignment_csv(prep.assignment, (fs::path(cfg.output_dir) / "assignment.csv").string());
      std::cout << "groups: " << prep.assignment.n << "  N: " << prep.assignment.total << "\n";
      for (int j = 1; j <= prep.assignment.n; ++j) {
        const auto [lo, hi] = prep.assignment.activeness_range[j - 1];
        std::cout << "  group " << j << ": n_j=" << prep.assignment.counts[j - 1]
                  << "  activeness [" << lo << ", " << hi << "]\n";
      }
      return kOk;
    });
  }

  if (synth->parsed()) {
    return run_guarded([&] {
      ExperimentConfig cfg = resolve_config(synth_opts);
      SynthSpec spec = cfg.synth;
      spec.seed = cfg.seed;
      InteractionLog log = generate_synthetic(spec);
      fs::create_directories(cfg.output_dir);
      const std::string path = (fs::path(cfg.output_dir) / "synthetic.csv").string();
      save_interactions_csv(log, path);
      std::cout << "wrote " << path << " (" << log.records.size() << " interactions, "
                << log.num_users() << " users)\n";
      return kOk;
    });
  }

  auto build_trunk = [](const ExperimentConfig& cfg, const PreparedData& prep) {
    return build_model(arch_from_name(cfg.arch), prep.log.num_users(), prep.log.num_items(),
                       ModelDims{0, 0, cfg.embedding_dim, cfg.hidden_dim, cfg.attention_dim,
                                 cfg.max_seq_len, cfg.extractor_layers},
                       Rng::derive(cfg.seed, 0x3aad));
  };

  if (s1->parsed()) {
    return run_guarded([&] {
      ExperimentConfig cfg = resolve_config(s1_opts);
      PreparedData prep = prepare_data(cfg);
      fs::create_directories(cfg.output_dir);
      TrainConfig tc = cfg.train;
      StageResult res = train_stage1(tc, prep.data.train, prep.assignment,
                                     build_trunk(cfg, prep));
      const std::string out =
          (fs::path(cfg.output_dir) / "stage1_final.ckpt").string();
      save_checkpoint(out, res.trunk, nullptr, nullptr, config_to_json(cfg).dump(2), cfg.seed);
      std::cout << "stage 1 done after " << res.epochs_run
                << " epochs, best val loss " << res.best_val_loss << "\nwrote " << out << "\n";
      return kOk;
    });
  }

  if (s2->parsed()) {
    return run_guarded([&] {
      ExperimentConfig cfg = resolve_config(s2_opts);
      PreparedData prep = prepare_data(cfg);
      fs::create_directories(cfg.output_dir);
      const std::string in = trunk_path.empty()
                                 ? (fs::path(cfg.output_dir) / "stage1_final.ckpt").string()
                                 : trunk_path;
      Checkpoint ckpt = load_checkpoint(in);
      TrainConfig tc = cfg.train;
      StageResult res =
          train_stage2(tc, prep.data.train, prep.assignment, std::move(ckpt.trunk));
      const std::string out = (fs::path(cfg.output_dir) / "final.ckpt").string();
      save_checkpoint(out, res.trunk, &res.plugins, nullptr, config_to_json(cfg).dump(2),
                      cfg.seed);
      std::cout << "stage 2 done after " << res.epochs_run
                << " epochs, best val loss " << res.best_val_loss << "\nwrote " << out << "\n";
      return kOk;
    });
  }

  if (eval->parsed()) {
    return run_guarded([&] {
      ExperimentConfig cfg = resolve_config(eval_opts);
      PreparedData prep = prepare_data(cfg);
      const std::string in = eval_ckpt.empty()
                                 ? (fs::path(cfg.output_dir) / "final.ckpt").string()
                                 : eval_ckpt;
      Checkpoint ckpt = load_checkpoint(in);
      const PluginSet* plugins = ckpt.plugins ? &*ckpt.plugins : nullptr;
      auto preds = score_test_set(ckpt.trunk, plugins, prep.data, prep.assignment);
      MetricsReport rep = build_report(preds, prep.assignment, cfg.ks,
                                       tie_policy_from_name(cfg.tie_policy));
      rep.dataset = cfg.dataset_name;
      rep.model = cfg.arch;
      rep.seed = cfg.seed;
      print_report_summary(rep);
      return kOk;
    });
  }

  return kOk;
}
