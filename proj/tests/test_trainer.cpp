#include <doctest.h>

#include <cmath>
#include <cstring>
#include <cstdio>
#include <fstream>

#include "longtail/experiment.hpp"
#include "longtail/numeric.hpp"
#include "longtail/rng.hpp"
#include "longtail/trainer.hpp"

using namespace longtail;

namespace {

// Linearly separable toy task: everyone clicks even items only.
std::vector<Sample> separable_samples(int users, int per_user) {
  std::vector<Sample> out;
  for (int u = 0; u < users; ++u) {
    for (int k = 0; k < per_user; ++k) {
      for (int item = 0; item < 2; ++item) {
        Sample s;
        s.user = u;
        s.item = (2 * k + item) % 8;
        s.label = (s.item % 2 == 0) ? 1.0 : 0.0;
        s.anchor_pos = 0;
        s.sequence = {-1, -1};
        s.group = 1 + (u * 2) / users;  // two groups, low user ids first
        out.push_back(s);
      }
    }
  }
  return out;
}

GroupAssignment two_groups(int users, const std::vector<Sample>& samples) {
  GroupAssignment a;
  a.n = 2;
  a.counts = {0, 0};
  for (int u = 0; u < users; ++u) a.group_of[u] = 1 + (u * 2) / users;
  for (const auto& s : samples) a.counts[s.group - 1] += 1;
  a.total = static_cast<std::int64_t>(samples.size());
  a.activeness_range = {{1, 5}, {6, 100}};
  return a;
}

TrunkParams toy_model(int users, std::uint64_t seed) {
  ModelDims dims;
  dims.embedding_dim = 4;
  dims.hidden_dim = 8;
  dims.max_seq_len = 2;
  return build_model(Arch::avg_pool, users, 8, dims, seed);
}

std::string trunk_bytes(const TrunkParams& t) {
  std::string out;
  for (const auto& p : t.params)
    out.append(reinterpret_cast<const char*>(p.data.values.data()),
               p.data.values.size() * sizeof(double));
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("trainer");

TEST_CASE("config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  TrainConfig bad = cfg;
  bad.stage1_lr = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.stage2_trunk_lr = cfg.stage1_lr * 2;  // must stay <= stage1 lr
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.validation_fraction = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(cfg.resolved_minibatch(5) == 512 / 5);
  TrainConfig tiny = cfg;
  tiny.batch_size = 3;
  CHECK(tiny.resolved_minibatch(5) == 1);
}

TEST_CASE("stage 1 drives the loss down on a separable task") {
  const int users = 16;
  auto samples = separable_samples(users, 6);
  GroupAssignment assignment = two_groups(users, samples);
  TrunkParams trunk = toy_model(users, 3);

  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.stage1_lr = 0.01;    // quick descent for the test
  cfg.stage1_epochs = 25;  // 12 batches/epoch at mb 16 -> ~300 steps
  cfg.patience = 25;
  cfg.validation_fraction = 0.1;
  cfg.seed = 5;

  std::vector<std::size_t> all_idx(samples.size());
  for (std::size_t i = 0; i < all_idx.size(); ++i) all_idx[i] = i;
  Batch everything = make_batch(samples, all_idx, 0);
  const double initial_loss = bce_loss(predict(trunk, everything), everything.labels);

  StageResult res = train_stage1(cfg, samples, assignment, std::move(trunk));
  const double final_loss =
      bce_loss(predict(res.trunk, everything), everything.labels);
  CHECK(final_loss < initial_loss);
  CHECK(final_loss < 0.4);  // separable: well below chance (ln 2)
  CHECK(res.curve.size() == static_cast<std::size_t>(res.epochs_run));
}

TEST_CASE("fixed seed reproduces bit-identical parameters") {
  const int users = 10;
  auto samples = separable_samples(users, 4);
  GroupAssignment assignment = two_groups(users, samples);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.stage1_epochs = 4;
  cfg.stage2_epochs = 2;
  cfg.patience = 10;
  cfg.seed = 42;

  StageResult a = train_stage1(cfg, samples, assignment, toy_model(users, 9));
  StageResult b = train_stage1(cfg, samples, assignment, toy_model(users, 9));
  CHECK(trunk_bytes(a.trunk) == trunk_bytes(b.trunk));

  StageResult a2 = train_stage2(cfg, samples, assignment, a.trunk);
  StageResult b2 = train_stage2(cfg, samples, assignment, b.trunk);
  CHECK(trunk_bytes(a2.trunk) == trunk_bytes(b2.trunk));
  REQUIRE(a2.plugins.light.size() == 2);
  for (int j = 0; j < 2; ++j)
    for (std::size_t p = 0; p < a2.plugins.light[j].params.size(); ++p)
      CHECK(a2.plugins.light[j].params[p].data.values ==
            b2.plugins.light[j].params[p].data.values);
}

TEST_CASE("parallel mode matches sequential bit for bit") {
  const int users = 10;
  auto samples = separable_samples(users, 4);
  GroupAssignment assignment = two_groups(users, samples);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.stage1_epochs = 3;
  cfg.patience = 10;
  cfg.seed = 17;

  StageResult seq = train_stage1(cfg, samples, assignment, toy_model(users, 1));
  cfg.sequential = false;
  StageResult par = train_stage1(cfg, samples, assignment, toy_model(users, 1));
  CHECK(trunk_bytes(seq.trunk) == trunk_bytes(par.trunk));
}

TEST_CASE("n=1 training equals a plain mini-batch loop") {
  const int users = 8;
  auto samples = separable_samples(users, 4);
  GroupAssignment one;
  one.n = 1;
  for (int u = 0; u < users; ++u) one.group_of[u] = 1;
  one.counts = {static_cast<std::int64_t>(samples.size())};
  one.total = one.counts[0];
  one.activeness_range = {{1, 100}};
  for (auto& s : samples) s.group = 1;

  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.stage1_epochs = 3;
  cfg.patience = 10;
  cfg.validation_fraction = 0.0;
  cfg.seed = 33;

  StageResult via_agg = train_stage1(cfg, samples, one, toy_model(users, 4));

  // plain loop: same shuffling (mirrors the trainer's seed derivation), same
  // Adam, but no queue or weighting anywhere
  TrunkParams plain = toy_model(users, 4);
  std::vector<int> groups(samples.size(), 1);
  GroupedSampleStream stream(groups, 1, cfg.resolved_minibatch(1),
                             Rng::derive(cfg.seed, 0xb47c + 1));
  AdamOptimizer opt(cfg.adam);
  for (int epoch = 1; epoch <= cfg.stage1_epochs; ++epoch) {
    for (std::size_t b = 0; b < stream.batches_per_epoch(); ++b) {
      auto mini = stream.next_batch();
      Batch batch = make_batch(samples, mini[0], 1);
      BackwardResult r = backward(plain, batch);
      opt.step(plain.all_tensors(), r.grads, cfg.stage1_lr);
    }
  }
  CHECK(trunk_bytes(via_agg.trunk) == trunk_bytes(plain));
}

TEST_CASE("stage 2 with a frozen trunk still improves the validation loss") {
  // two groups with opposite tastes on the same items: the shared trunk
  // cannot satisfy both, the per-group plugins can
  const int users = 16;
  auto samples = separable_samples(users, 6);
  for (auto& s : samples)
    s.label = (s.item % 2 == (s.group - 1)) ? 1.0 : 0.0;  // taste follows the group
  GroupAssignment assignment = two_groups(users, samples);

  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.stage1_epochs = 6;
  cfg.stage2_epochs = 30;
  cfg.patience = 50;
  cfg.stage2_plugin_lr = 0.01;  // fast plugins for the test
  cfg.stage2_trunk_lr = 0.0;    // frozen trunk
  cfg.seed = 7;

  StageResult s1 = train_stage1(cfg, samples, assignment, toy_model(users, 2));
  const std::string frozen = trunk_bytes(s1.trunk);
  StageResult s2 = train_stage2(cfg, samples, assignment, s1.trunk);

  CHECK(trunk_bytes(s2.trunk) == frozen);  // lr 0 really freezes
  CHECK(s2.curve.back().val_loss < s1.curve.back().val_loss);
}

TEST_CASE("naive variant trains and keeps embeddings plugin-free") {
  const int users = 8;
  auto samples = separable_samples(users, 3);
  GroupAssignment assignment = two_groups(users, samples);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.stage1_epochs = 2;
  cfg.stage2_epochs = 2;
  cfg.patience = 10;
  cfg.plugin = PluginVariant::naive;
  cfg.stage2_plugin_lr = 1e-5;
  cfg.seed = 19;

  StageResult s1 = train_stage1(cfg, samples, assignment, toy_model(users, 11));
  StageResult s2 = train_stage2(cfg, samples, assignment, s1.trunk);
  REQUIRE(s2.plugins.variant == PluginVariant::naive);
  REQUIRE(s2.plugins.naive.size() == 2);
  for (const auto& pl : s2.plugins.naive)
    for (const auto& r : pl.residuals) CHECK(r.section != Section::embedding);
}

TEST_CASE("per-epoch callback sees both stages") {
  const int users = 8;
  auto samples = separable_samples(users, 3);
  GroupAssignment assignment = two_groups(users, samples);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.stage1_epochs = 2;
  cfg.stage2_epochs = 2;
  cfg.patience = 10;
  cfg.seed = 3;

  int stage1_calls = 0, stage2_calls = 0;
  auto cb = [&](const EpochSnapshot& snap) {
    REQUIRE(snap.stats != nullptr);
    REQUIRE(snap.trunk != nullptr);
    REQUIRE(snap.trunk_opt != nullptr);
    if (snap.stats->stage == 1) {
      ++stage1_calls;
      CHECK(snap.plugins == nullptr);
    } else {
      ++stage2_calls;
      CHECK(snap.plugins != nullptr);
    }
    CHECK(snap.stats->group_val_loss.size() == 2);
  };
  StageResult s1 = train_stage1(cfg, samples, assignment, toy_model(users, 5), cb);
  train_stage2(cfg, samples, assignment, s1.trunk, cb);
  CHECK(stage1_calls == 2);
  CHECK(stage2_calls == 2);
}

TEST_CASE("a group without samples is a configuration error") {
  const int users = 8;
  auto samples = separable_samples(users, 2);
  GroupAssignment assignment = two_groups(users, samples);
  assignment.n = 3;  // declared third group owns no samples
  assignment.counts.push_back(0);
  assignment.activeness_range.push_back({200, 300});
  TrainConfig cfg;
  cfg.stage1_epochs = 1;
  CHECK_THROWS_AS(train_stage1(cfg, samples, assignment, toy_model(users, 5)), ConfigError);
}

TEST_CASE("gradient-norm dump writes one row per group per batch") {
  const int users = 8;
  auto samples = separable_samples(users, 2);
  GroupAssignment assignment = two_groups(users, samples);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.stage1_epochs = 2;
  cfg.patience = 5;
  cfg.seed = 21;
  cfg.grad_norm_csv = "/tmp/longtail_grad_norms_test.csv";
  train_stage1(cfg, samples, assignment, toy_model(users, 5));

  std::ifstream in(cfg.grad_norm_csv);
  REQUIRE(in.good());
  std::string header;
  std::getline(in, header);
  CHECK(header == "stage,epoch,batch,group,grad_norm");
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows > 0);
  CHECK(rows % 2 == 0);  // two groups per batch
  std::remove(cfg.grad_norm_csv.c_str());
}

TEST_CASE("missing assignment user raises a config-grade error") {
  const int users = 8;
  auto samples = separable_samples(users, 2);
  GroupAssignment assignment = two_groups(users, samples);
  samples.push_back(samples.front());
  samples.back().user = 999;  // not in the assignment
  samples.back().group = 0;
  TrainConfig cfg;
  cfg.stage1_epochs = 1;
  CHECK_THROWS_AS(train_stage1(cfg, samples, assignment, toy_model(1000, 5)),
                  ArgumentError);
}

TEST_SUITE_END();
