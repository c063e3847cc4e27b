#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "longtail/experiment.hpp"
#include "longtail/serialize.hpp"
#include "longtail/verify.hpp"

using namespace longtail;
namespace fs = std::filesystem;

namespace {

ExperimentConfig quick_config(const std::string& out_dir) {
  Json j;
  j["seed"] = 11;
  j["output_dir"] = out_dir;
  j["dataset"] = {{"kind", "synthetic"},
                  {"synth",
                   {{"groups", 3},
                    {"users_per_group", {24, 12, 6}},
                    {"activeness", {{3, 5}, {8, 12}, {18, 26}}},
                    {"num_items", 50},
                    {"shared_dim", 4},
                    {"group_dim", 2}}}};
  j["grouping"] = {{"mode", "sequence-length"}, {"n", 3}};
  j["model"] = {{"arch", "avg-pool"}, {"embedding_dim", 4}, {"hidden_dim", 8}};
  j["sampling"] = {{"train_negatives", 2}, {"test_mode", "ratio-1-to-99"},
                   {"max_seq_len", 6}};
  j["train"] = {{"batch_size", 30}, {"stage1_epochs", 2}, {"stage2_epochs", 1},
                {"patience", 5}};
  j["metrics"] = {{"k", {1, 5}}};
  return config_from_json(j);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_SUITE_BEGIN("experiment");

TEST_CASE("config round-trips through json") {
  ExperimentConfig cfg = quick_config("/tmp/longtail_cfg_rt");
  const Json a = config_to_json(cfg);
  const Json b = config_to_json(config_from_json(a));
  CHECK(a.dump() == b.dump());
}

TEST_CASE("config errors name the field") {
  Json j;
  j["dataset"] = {{"kind", "file"}};
  try {
    (void)config_from_json(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("dataset.path") != std::string::npos);
  }
  j["dataset"] = {{"kind", "file"}, {"path", "/no/such/file.csv"}};
  CHECK_THROWS_AS((void)config_from_json(j), ConfigError);
  j = Json{{"grouping", {{"n", 0}}}};
  CHECK_THROWS_AS((void)config_from_json(j), ConfigError);
  j = Json{{"train", {{"batch_size", 64}, {"stage1_lr", -0.5}}}};
  CHECK_THROWS_AS((void)config_from_json(j), ConfigError);
}

TEST_CASE("naive plugin variant defaults to the lower rate") {
  Json j;
  j["train"] = {{"plugin", "naive"}};
  ExperimentConfig cfg = config_from_json(j);
  CHECK(cfg.train.stage2_plugin_lr == 1e-5);
  j["train"] = {{"plugin", "light"}};
  CHECK(config_from_json(j).train.stage2_plugin_lr == 1e-4);
}

TEST_CASE("prepare_data stamps groups and keeps the split causal") {
  ExperimentConfig cfg = quick_config("/tmp/longtail_prep");
  PreparedData prep = prepare_data(cfg);
  CHECK(prep.assignment.n == 3);
  CHECK(prep.data.seq_len == 6);
  for (const auto& s : prep.data.train) {
    CHECK(s.group >= 1);
    CHECK(s.group <= 3);
  }
  for (const auto& s : prep.data.test) {
    CHECK(s.group >= 1);
    CHECK(s.group <= 3);
  }
  // every group nonempty and ordered by activeness
  for (int j = 0; j < 3; ++j) CHECK(prep.assignment.counts[j] > 0);
  for (int j = 1; j < 3; ++j)
    CHECK(prep.assignment.activeness_range[j - 1].second <=
          prep.assignment.activeness_range[j].first);
}

TEST_CASE("run_experiment emits the full artifact set, deterministically") {
  const fs::path dir1("/tmp/longtail_run_a"), dir2("/tmp/longtail_run_b");
  fs::remove_all(dir1);
  fs::remove_all(dir2);

  ExperimentConfig cfg = quick_config(dir1.string());
  ExperimentResult r1 = run_experiment(cfg);
  const std::string first_bytes = slurp(dir1 / "report.json");
  ExperimentResult r1_again = run_experiment(cfg);  // same config, same dir

  cfg.output_dir = dir2.string();
  ExperimentResult r2 = run_experiment(cfg);

  for (const char* f : {"config_resolved.json", "assignment.csv", "curves.csv",
                        "report.json", "report.txt", "manifest.json", "final.ckpt"})
    CHECK(fs::exists(dir1 / f));
  CHECK(fs::exists(dir1 / "stage1_epoch1.ckpt"));
  CHECK(fs::exists(dir1 / "stage2_epoch1.ckpt"));

  // byte-identical reports across runs of the same config and seed
  CHECK(first_bytes == slurp(dir1 / "report.json"));
  CHECK(r1.report_json == r1_again.report_json);

  // a different output dir changes only the embedded config echo
  Json ja = Json::parse(r1.report_json), jb = Json::parse(r2.report_json);
  ja.erase("config");
  ja.erase("config_hash");
  jb.erase("config");
  jb.erase("config_hash");
  CHECK(ja.dump() == jb.dump());

  const Json manifest = Json::parse(slurp(dir1 / "manifest.json"));
  CHECK(manifest.at("complete").get<bool>());
  CHECK(manifest.at("files").at("report.json").get<std::string>() ==
        file_hash_hex((dir1 / "report.json").string()));

  const Json report = Json::parse(r1.report_json);
  CHECK(report.at("seed").get<std::uint64_t>() == 11);
  CHECK(report.at("group_level").size() == 3);
  CHECK(report.at("config").at("train").at("batch_size").get<int>() == 30);

  // reloading the final checkpoint reproduces the scoring path
  Checkpoint ckpt = load_checkpoint((dir1 / "final.ckpt").string());
  CHECK(ckpt.plugins.has_value());
  CHECK(ckpt.seed == 11);
  PreparedData prep = prepare_data(cfg);
  auto preds = score_test_set(ckpt.trunk, &*ckpt.plugins, prep.data, prep.assignment);
  MetricsReport rep = build_report(preds, prep.assignment, cfg.ks);
  CHECK(rep.pooled_auc == r1.report.pooled_auc);

  fs::remove_all(dir1);
  fs::remove_all(dir2);
}

TEST_CASE("checkpoint round trip is bit exact") {
  ExperimentConfig cfg = quick_config("/tmp/longtail_ckpt");
  PreparedData prep = prepare_data(cfg);
  TrunkParams trunk = build_model(Arch::target_attention, prep.log.num_users(),
                                  prep.log.num_items(),
                                  ModelDims{0, 0, 4, 8, 4, 6, 1}, 77);
  PluginSet set = init_plugin_set(trunk, PluginVariant::light, 3, 5);
  const std::string path = "/tmp/longtail_ckpt_test.bin";
  save_checkpoint(path, trunk, &set, nullptr, "{}", 123);
  Checkpoint c = load_checkpoint(path);
  CHECK(c.trunk.arch == Arch::target_attention);
  CHECK(c.seed == 123);
  REQUIRE(c.trunk.params.size() == trunk.params.size());
  for (std::size_t i = 0; i < trunk.params.size(); ++i) {
    CHECK(c.trunk.params[i].name == trunk.params[i].name);
    CHECK(c.trunk.params[i].data.values == trunk.params[i].data.values);
  }
  REQUIRE(c.plugins.has_value());
  CHECK(c.plugins->light.size() == 3);
  CHECK(c.plugins->light[2].tensor("plg.a.w").data.values ==
        set.light[2].tensor("plg.a.w").data.values);
  fs::remove(path);
}

TEST_CASE("verify suites all pass") {
  for (const auto& r : run_verify("all")) {
    INFO(r.suite, ": ", r.detail);
    CHECK(r.passed);
  }
  CHECK_THROWS_AS(run_verify("bogus"), ArgumentError);
}

TEST_SUITE_END();
