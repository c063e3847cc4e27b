#include "longtail/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "longtail/rng.hpp"
#include "longtail/serialize.hpp"

namespace fs = std::filesystem;

namespace longtail {

void ExperimentConfig::validate() const {
  if (dataset_kind != "synthetic" && dataset_kind != "file")
    throw ConfigError("dataset.kind must be 'synthetic' or 'file'");
  if (dataset_kind == "file" && dataset_path.empty())
    throw ConfigError("dataset.path is required when dataset.kind is 'file'");
  if (dataset_kind == "file" && !fs::exists(dataset_path))
    throw ConfigError("dataset.path does not exist: " + dataset_path);
  log_format_from_name(dataset_format);
  test_mode_from_name(test_mode);
  activeness_mode_from_name(grouping_mode);
  group_balance_from_name(grouping_balance);
  arch_from_name(arch);
  tie_policy_from_name(tie_policy);
  if (groups < 1) throw ConfigError("grouping.n must be >= 1");
  if (train_negatives < 1) throw ConfigError("sampling.train_negatives must be >= 1");
  if (max_seq_len < 1) throw ConfigError("sampling.max_seq_len must be >= 1");
  if (embedding_dim < 1 || hidden_dim < 1)
    throw ConfigError("model dims must be positive");
  if (ks.empty()) throw ConfigError("metrics.k must be nonempty");
  for (int k : ks)
    if (k < 1) throw ConfigError("metrics.k entries must be >= 1");
  try {
    train.validate();
  } catch (const ConfigError&) {
    throw;
  }
}

namespace {

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

}  // namespace

ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
  c.output_dir = get_or<std::string>(j, "output_dir", c.output_dir);

  if (j.contains("dataset")) {
    const Json& d = j.at("dataset");
    c.dataset_kind = get_or<std::string>(d, "kind", c.dataset_kind);
    c.dataset_name = get_or<std::string>(d, "name", c.dataset_kind);
    c.dataset_path = get_or<std::string>(d, "path", c.dataset_path);
    c.dataset_format = get_or<std::string>(d, "format", c.dataset_format);
    c.max_users = get_or<std::size_t>(d, "max_users", c.max_users);
    if (d.contains("synth")) {
      const Json& s = d.at("synth");
      c.synth.groups = get_or<int>(s, "groups", c.synth.groups);
      if (s.contains("users_per_group"))
        c.synth.users_per_group = s.at("users_per_group").get<std::vector<int>>();
      if (s.contains("activeness")) {
        c.synth.activeness.clear();
        for (const auto& pair : s.at("activeness")) {
          if (!pair.is_array() || pair.size() != 2)
            throw ConfigError("synth.activeness entries must be [lo, hi]");
          c.synth.activeness.emplace_back(pair[0].get<int>(), pair[1].get<int>());
        }
      }
      c.synth.num_items = get_or<int>(s, "num_items", c.synth.num_items);
      c.synth.shared_dim = get_or<int>(s, "shared_dim", c.synth.shared_dim);
      c.synth.group_dim = get_or<int>(s, "group_dim", c.synth.group_dim);
      c.synth.shared_strength = get_or<double>(s, "shared_strength", c.synth.shared_strength);
      c.synth.group_strength = get_or<double>(s, "group_strength", c.synth.group_strength);
      c.synth.noise = get_or<double>(s, "noise", c.synth.noise);
      c.synth.candidates_per_event =
          get_or<int>(s, "candidates_per_event", c.synth.candidates_per_event);
    }
  }

  if (j.contains("sampling")) {
    const Json& s = j.at("sampling");
    c.train_negatives = get_or<int>(s, "train_negatives", c.train_negatives);
    c.test_mode = get_or<std::string>(s, "test_mode", c.test_mode);
    c.max_seq_len = get_or<std::size_t>(s, "max_seq_len", c.max_seq_len);
  }

  if (j.contains("grouping")) {
    const Json& g = j.at("grouping");
    c.grouping_mode = get_or<std::string>(g, "mode", c.grouping_mode);
    c.grouping_balance = get_or<std::string>(g, "balance", c.grouping_balance);
    c.groups = get_or<int>(g, "n", c.groups);
  }

  if (j.contains("model")) {
    const Json& m = j.at("model");
    c.arch = get_or<std::string>(m, "arch", c.arch);
    c.embedding_dim = get_or<std::size_t>(m, "embedding_dim", c.embedding_dim);
    c.hidden_dim = get_or<std::size_t>(m, "hidden_dim", c.hidden_dim);
    c.attention_dim = get_or<std::size_t>(m, "attention_dim", c.attention_dim);
    c.extractor_layers = get_or<std::size_t>(m, "extractor_layers", c.extractor_layers);
  }

  if (j.contains("train")) {
    const Json& t = j.at("train");
    c.train.stage1_lr = get_or<double>(t, "stage1_lr", c.train.stage1_lr);
    c.train.plugin = plugin_variant_from_name(
        get_or<std::string>(t, "plugin", plugin_variant_name(c.train.plugin)));
    // naive residuals overfit fast; default their rate an order lower still
    const double plugin_lr_default =
        c.train.plugin == PluginVariant::naive ? 1e-5 : c.train.stage2_plugin_lr;
    c.train.stage2_plugin_lr = get_or<double>(t, "stage2_plugin_lr", plugin_lr_default);
    c.train.stage2_trunk_lr = get_or<double>(t, "stage2_trunk_lr", c.train.stage2_trunk_lr);
    c.train.batch_size = get_or<std::size_t>(t, "batch_size", c.train.batch_size);
    c.train.minibatch_size = get_or<std::size_t>(t, "minibatch_size", c.train.minibatch_size);
    c.train.stage1_epochs = get_or<int>(t, "stage1_epochs", c.train.stage1_epochs);
    c.train.stage2_epochs = get_or<int>(t, "stage2_epochs", c.train.stage2_epochs);
    c.train.patience = get_or<int>(t, "patience", c.train.patience);
    c.train.validation_fraction =
        get_or<double>(t, "validation_fraction", c.train.validation_fraction);
    c.train.light_init_scale = get_or<double>(t, "light_init_scale", c.train.light_init_scale);
    c.train.sequential = get_or<bool>(t, "sequential", c.train.sequential);
    c.run_stage2 = get_or<bool>(t, "run_stage2", c.run_stage2);
    c.dump_grad_norms = get_or<bool>(t, "dump_grad_norms", c.dump_grad_norms);
  }

  if (j.contains("metrics")) {
    const Json& m = j.at("metrics");
    if (m.contains("k")) c.ks = m.at("k").get<std::vector<int>>();
    c.tie_policy = get_or<std::string>(m, "tie_policy", c.tie_policy);
  }

  c.train.seed = c.seed;
  c.validate();
  return c;
}

Json config_to_json(const ExperimentConfig& c) {
  Json synth = Json::object();
  synth["groups"] = c.synth.groups;
  synth["users_per_group"] = c.synth.users_per_group;
  Json act = Json::array();
  for (const auto& [lo, hi] : c.synth.activeness) act.push_back(Json::array({lo, hi}));
  synth["activeness"] = act;
  synth["num_items"] = c.synth.num_items;
  synth["shared_dim"] = c.synth.shared_dim;
  synth["group_dim"] = c.synth.group_dim;
  synth["shared_strength"] = c.synth.shared_strength;
  synth["group_strength"] = c.synth.group_strength;
  synth["noise"] = c.synth.noise;
  synth["candidates_per_event"] = c.synth.candidates_per_event;

  Json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["dataset"] = {{"kind", c.dataset_kind}, {"name", c.dataset_name},
                  {"path", c.dataset_path}, {"format", c.dataset_format},
                  {"max_users", c.max_users}, {"synth", synth}};
  j["sampling"] = {{"train_negatives", c.train_negatives}, {"test_mode", c.test_mode},
                   {"max_seq_len", c.max_seq_len}};
  j["grouping"] = {{"mode", c.grouping_mode}, {"balance", c.grouping_balance},
                   {"n", c.groups}};
  j["model"] = {{"arch", c.arch}, {"embedding_dim", c.embedding_dim},
                {"hidden_dim", c.hidden_dim}, {"attention_dim", c.attention_dim},
                {"extractor_layers", c.extractor_layers}};
  j["train"] = {{"stage1_lr", c.train.stage1_lr},
                {"stage2_plugin_lr", c.train.stage2_plugin_lr},
                {"stage2_trunk_lr", c.train.stage2_trunk_lr},
                {"batch_size", c.train.batch_size},
                {"minibatch_size", c.train.minibatch_size},
                {"stage1_epochs", c.train.stage1_epochs},
                {"stage2_epochs", c.train.stage2_epochs},
                {"patience", c.train.patience},
                {"validation_fraction", c.train.validation_fraction},
                {"plugin", plugin_variant_name(c.train.plugin)},
                {"light_init_scale", c.train.light_init_scale},
                {"sequential", c.train.sequential},
                {"run_stage2", c.run_stage2},
                {"dump_grad_norms", c.dump_grad_norms}};
  j["metrics"] = {{"k", c.ks}, {"tie_policy", c.tie_policy}};
  return j;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
  PreparedData out;
  if (cfg.dataset_kind == "synthetic") {
    SynthSpec spec = cfg.synth;
    spec.seed = cfg.seed;
    out.log = generate_synthetic(spec);
  } else {
    out.log = load_interactions(cfg.dataset_path, log_format_from_name(cfg.dataset_format));
  }
  if (cfg.max_users > 0 && cfg.max_users < out.log.num_users())
    out.log = subsample_users(out.log, cfg.max_users, cfg.seed);

  Split split = leave_last_out_split(out.log);
  out.dropped_users = split.dropped_users;
  out.activeness =
      compute_activeness(split.train, activeness_mode_from_name(cfg.grouping_mode));

  out.data = negative_sample(split, cfg.train_negatives,
                             test_mode_from_name(cfg.test_mode), cfg.seed);
  build_sequences(out.data, out.log, cfg.max_seq_len);

  std::map<std::int64_t, std::int64_t> samples_per_user;
  for (const auto& s : out.data.train) samples_per_user[s.user] += 1;
  out.assignment = assign_groups(out.activeness, cfg.groups, samples_per_user,
                                 group_balance_from_name(cfg.grouping_balance));

  for (auto& s : out.data.train) s.group = out.assignment.group_for(s.user, 0);
  for (auto& s : out.data.test) {
    auto it = out.activeness.per_user.find(s.user);
    const std::int64_t hint = it == out.activeness.per_user.end() ? 0 : it->second;
    s.group = out.assignment.group_for(s.user, hint);
  }
  return out;
}

std::vector<Prediction> score_test_set(const TrunkParams& trunk, const PluginSet* plugins,
                                       const SampledDataset& data,
                                       const GroupAssignment& assignment) {
  std::vector<Prediction> out;
  out.reserve(data.test.size());

  std::vector<std::vector<std::size_t>> by_group(assignment.n);
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    const int g = data.test[i].group;
    if (g < 1 || g > assignment.n)
      throw ArgumentError("score_test_set: test sample without group");
    by_group[g - 1].push_back(i);
  }

  constexpr std::size_t kChunk = 2048;
  for (int g = 1; g <= assignment.n; ++g) {
    const auto& idx = by_group[g - 1];
    for (std::size_t start = 0; start < idx.size(); start += kChunk) {
      const std::size_t stop = std::min(idx.size(), start + kChunk);
      std::vector<std::size_t> chunk(idx.begin() + start, idx.begin() + stop);
      Batch b = make_batch(data.test, chunk, g);
      const std::vector<double> scores =
          plugins != nullptr ? plugins->predict(trunk, b, g) : predict(trunk, b);
      for (std::size_t k = 0; k < chunk.size(); ++k) {
        const Sample& s = data.test[chunk[k]];
        out.push_back(Prediction{s.user, scores[k], s.label, g});
      }
    }
  }
  return out;
}

Json report_to_json(const MetricsReport& rep, const ExperimentConfig& cfg) {
  Json j;
  j["dataset"] = rep.dataset;
  j["model"] = rep.model;
  j["seed"] = rep.seed;
  j["config_hash"] = rep.config_hash;
  j["tie_policy"] = rep.tie == TiePolicy::strict ? "strict" : "half";

  Json groups = Json::array();
  for (const auto& g : rep.groups) {
    Json e;
    e["group"] = g.group;
    e["users"] = g.users;
    e["samples"] = g.samples;
    e["auc_pooled"] = g.auc_pooled;
    e["auc_user_mean"] = g.auc_user_mean;
    for (const auto& [k, v] : g.hitrate) e["hitrate@" + std::to_string(k)] = v;
    for (const auto& [k, v] : g.ndcg) e["ndcg@" + std::to_string(k)] = v;
    groups.push_back(e);
  }
  j["group_level"] = groups;

  Json user;
  user["auc_user_mean"] = rep.user_level_auc;
  user["auc_pooled"] = rep.pooled_auc;
  user["users_evaluated"] = rep.users_evaluated;
  user["users_skipped"] = rep.users_skipped;
  for (const auto& [k, v] : rep.hitrate) user["hitrate@" + std::to_string(k)] = v;
  for (const auto& [k, v] : rep.ndcg) user["ndcg@" + std::to_string(k)] = v;
  j["user_level"] = user;

  j["config"] = config_to_json(cfg);
  return j;
}

namespace {

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write " + path.string());
  out << content;
}

void append_curve(std::ostream& os, const std::vector<EpochStats>& curve) {
  for (const auto& e : curve) {
    os << e.epoch << ',' << e.stage << ",0," << e.train_loss << ',' << e.val_loss << '\n';
    for (std::size_t g = 0; g < e.group_val_loss.size(); ++g)
      os << e.epoch << ',' << e.stage << ',' << (g + 1) << ',' << e.group_val_loss[g]
         << ",\n";
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);

  // flag the run incomplete until the manifest is rewritten at the end
  write_text_file(dir / "manifest.json", Json{{"complete", false}}.dump(2) + "\n");

  ExperimentResult result;
  result.resolved = cfg;
  const std::string config_echo = config_to_json(cfg).dump(2);
  write_text_file(dir / "config_resolved.json", config_echo + "\n");
  const std::string config_hash = fnv1a_hex(config_echo);

  auto stage_context = [](const char* stage, const std::exception& e) {
    return std::string(stage) + ": " + e.what();
  };

  PreparedData prep;
  try {
    prep = prepare_data(cfg);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(stage_context("ingest", e));
  }
  save_assignment_csv(prep.assignment, (dir / "assignment.csv").string());

  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  if (cfg.dump_grad_norms) tc.grad_norm_csv = (dir / "grad_norms.csv").string();

  TrunkParams trunk = build_model(arch_from_name(cfg.arch), prep.log.num_users(),
                                  prep.log.num_items(),
                                  ModelDims{0, 0, cfg.embedding_dim, cfg.hidden_dim,
                                            cfg.attention_dim, cfg.max_seq_len,
                                            cfg.extractor_layers},
                                  Rng::derive(cfg.seed, 0x3aad));

  auto checkpoint_cb = [&](const EpochSnapshot& snap) {
    std::ostringstream name;
    name << "stage" << snap.stats->stage << "_epoch" << snap.stats->epoch << ".ckpt";
    save_checkpoint((dir / name.str()).string(), *snap.trunk, snap.plugins, snap.trunk_opt,
                    config_echo, cfg.seed);
  };

  StageResult s1;
  try {
    s1 = train_stage1(tc, prep.data.train, prep.assignment, std::move(trunk), checkpoint_cb);
  } catch (const std::exception& e) {
    throw StateError(stage_context("train-stage1", e));
  }
  result.curve = s1.curve;

  const PluginSet* final_plugins = nullptr;
  StageResult s2;
  if (cfg.run_stage2) {
    try {
      s2 = train_stage2(tc, prep.data.train, prep.assignment, std::move(s1.trunk),
                        checkpoint_cb);
    } catch (const std::exception& e) {
      throw StateError(stage_context("train-stage2", e));
    }
    result.curve.insert(result.curve.end(), s2.curve.begin(), s2.curve.end());
    final_plugins = &s2.plugins;
  }
  const TrunkParams& final_trunk = cfg.run_stage2 ? s2.trunk : s1.trunk;

  std::vector<Prediction> preds;
  try {
    preds = score_test_set(final_trunk, final_plugins, prep.data, prep.assignment);
    result.report = build_report(preds, prep.assignment, cfg.ks,
                                 tie_policy_from_name(cfg.tie_policy));
  } catch (const std::exception& e) {
    throw StateError(stage_context("evaluate", e));
  }
  result.report.dataset = cfg.dataset_name;
  result.report.model = cfg.arch;
  result.report.seed = cfg.seed;
  result.report.config_hash = config_hash;

  // artifacts
  std::ostringstream curves;
  curves << "epoch,stage,group,loss,metric\n";
  append_curve(curves, result.curve);
  write_text_file(dir / "curves.csv", curves.str());

  result.report_json = report_to_json(result.report, cfg).dump(2) + "\n";
  write_text_file(dir / "report.json", result.report_json);
  write_text_file(dir / "report.txt", report_to_text(result.report));
  save_checkpoint((dir / "final.ckpt").string(), final_trunk, final_plugins, nullptr,
                  config_echo, cfg.seed);

  Json manifest;
  manifest["complete"] = true;
  manifest["seed"] = cfg.seed;
  manifest["config_hash"] = config_hash;
  Json hashes;
  for (const char* f : {"config_resolved.json", "assignment.csv", "curves.csv",
                        "report.json", "report.txt", "final.ckpt"}) {
    const std::string h = file_hash_hex((dir / f).string());
    hashes[f] = h;
    result.file_hashes[f] = h;
  }
  manifest["files"] = hashes;
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
  return result;
}

}  // namespace longtail
