#include <doctest.h>

#include <cmath>
#include <cstring>

#include "longtail/errors.hpp"
#include "longtail/numeric.hpp"
#include "longtail/plugin.hpp"
#include "longtail/rng.hpp"

using namespace longtail;

namespace {

TrunkParams small_trunk(Arch arch, std::uint64_t seed, std::size_t ext_layers = 1) {
  ModelDims dims;
  dims.embedding_dim = 3;
  dims.hidden_dim = 4;
  dims.attention_dim = 3;
  dims.max_seq_len = 4;
  dims.extractor_layers = ext_layers;
  return build_model(arch, 8, 11, dims, seed);
}

Batch small_batch(Rng& rng, const ModelDims& dims, std::size_t n) {
  Batch b;
  for (std::size_t i = 0; i < n; ++i) {
    b.users.push_back(static_cast<std::int64_t>(rng.uniform_int(dims.num_users)));
    b.items.push_back(static_cast<std::int64_t>(rng.uniform_int(dims.num_items)));
    std::vector<std::int64_t> seq(dims.max_seq_len, -1);
    const std::size_t real = rng.uniform_int(dims.max_seq_len + 1);
    for (std::size_t t = dims.max_seq_len - real; t < dims.max_seq_len; ++t)
      seq[t] = static_cast<std::int64_t>(rng.uniform_int(dims.num_items));
    b.sequences.push_back(std::move(seq));
    b.labels.push_back(rng.uniform() < 0.5 ? 0.0 : 1.0);
  }
  return b;
}

}  // namespace

TEST_SUITE_BEGIN("plugin");

TEST_CASE("naive plugin: zero residuals reproduce the trunk bit-exactly") {
  Rng rng(1);
  for (Arch arch : {Arch::avg_pool, Arch::recurrent, Arch::target_attention}) {
    TrunkParams trunk = small_trunk(arch, rng.next_u64());
    NaivePlugin p = init_naive(trunk, 1);
    for (const auto& r : p.residuals) {
      CHECK(r.section != Section::embedding);
      for (double v : r.data.values) CHECK(v == 0.0);
    }
    Batch b = small_batch(rng, trunk.dims, 5);
    const auto base = predict(trunk, b);
    const auto plugged = predict_naive(trunk, p, b);
    for (std::size_t i = 0; i < base.size(); ++i)
      CHECK(std::memcmp(&base[i], &plugged[i], sizeof(double)) == 0);
  }
}

TEST_CASE("naive plugin equals predicting the explicitly summed trunk") {
  Rng rng(2);
  TrunkParams trunk = small_trunk(Arch::avg_pool, rng.next_u64());
  NaivePlugin p = init_naive(trunk, 1);
  for (auto& r : p.residuals)
    for (double& v : r.data.values) v = rng.uniform(-0.05, 0.05);

  TrunkParams summed = trunk;
  for (const auto& r : p.residuals) summed.tensor(r.name).data.add_scaled(r.data, 1.0);

  Batch b = small_batch(rng, trunk.dims, 6);
  const auto via_plugin = predict_naive(trunk, p, b);
  const auto via_sum = predict(summed, b);
  for (std::size_t i = 0; i < via_plugin.size(); ++i)
    CHECK(std::memcmp(&via_plugin[i], &via_sum[i], sizeof(double)) == 0);
}

TEST_CASE("naive plugin shape and section discipline") {
  Rng rng(3);
  TrunkParams trunk = small_trunk(Arch::avg_pool, rng.next_u64());
  NaivePlugin p = init_naive(trunk, 1);

  NaivePlugin bad = p;
  bad.residuals[0].data = DenseArray::zeros({1, 1});
  CHECK_THROWS_AS(predict_naive(trunk, bad, small_batch(rng, trunk.dims, 2)), ArgumentError);

  NaivePlugin emb = p;
  emb.residuals.push_back(
      ParamTensor{"emb.user", DenseArray::zeros(trunk.tensor("emb.user").data.shape),
                  Section::embedding});
  CHECK_THROWS_AS(predict_naive(trunk, emb, small_batch(rng, trunk.dims, 2)), ArgumentError);
}

TEST_CASE("distinct residuals give distinct scores") {
  Rng rng(4);
  TrunkParams trunk = small_trunk(Arch::avg_pool, rng.next_u64());
  NaivePlugin p1 = init_naive(trunk, 1);
  NaivePlugin p2 = init_naive(trunk, 2);
  for (auto& r : p1.residuals)
    for (double& v : r.data.values) v = rng.uniform(-0.2, 0.2);
  for (auto& r : p2.residuals)
    for (double& v : r.data.values) v = rng.uniform(-0.2, 0.2);
  Batch b = small_batch(rng, trunk.dims, 4);
  const auto s1 = predict_naive(trunk, p1, b);
  const auto s2 = predict_naive(trunk, p2, b);
  bool any_diff = false;
  for (std::size_t i = 0; i < s1.size(); ++i) any_diff = any_diff || s1[i] != s2[i];
  CHECK(any_diff);
}

TEST_CASE("light plugin: exact-zero init reproduces the trunk") {
  Rng rng(5);
  for (Arch arch : {Arch::avg_pool, Arch::recurrent, Arch::target_attention}) {
    TrunkParams trunk = small_trunk(arch, rng.next_u64());
    LightPlugin p = init_light(trunk, 1, rng.next_u64(), 0.0);
    Batch b = small_batch(rng, trunk.dims, 5);
    const auto base = predict(trunk, b);
    const auto plugged = predict_light(trunk, p, b);
    for (std::size_t i = 0; i < base.size(); ++i)
      CHECK(std::fabs(base[i] - plugged[i]) <= 1e-9);
  }
}

TEST_CASE("light plugin: seeded init deterministic and small") {
  Rng rng(6);
  TrunkParams trunk = small_trunk(Arch::avg_pool, rng.next_u64());
  LightPlugin a = init_light(trunk, 2, 99);
  LightPlugin b = init_light(trunk, 2, 99);
  LightPlugin c = init_light(trunk, 2, 100);
  CHECK(a.tensor("plg.a.w").data.values == b.tensor("plg.a.w").data.values);
  CHECK(a.tensor("plg.a.w").data.values != c.tensor("plg.a.w").data.values);
  for (double v : a.tensor("plg.b.w").data.values) CHECK(std::fabs(v) <= 1e-3);
  for (double v : a.tensor("plg.a.b").data.values) CHECK(v == 0.0);
  for (double v : a.tensor("plg.b.b").data.values) CHECK(v == 0.0);
}

TEST_CASE("light plugin: default init deviates at most 1e-2 in logit space") {
  Rng rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    TrunkParams trunk = small_trunk(trial % 2 == 0 ? Arch::avg_pool : Arch::target_attention,
                                    rng.next_u64());
    LightPlugin p = init_light(trunk, 1, rng.next_u64());
    Batch b = small_batch(rng, trunk.dims, 3);
    const auto base = predict(trunk, b);
    const auto plugged = predict_light(trunk, p, b);
    for (std::size_t i = 0; i < base.size(); ++i) {
      const double logit_base = std::log(base[i] / (1.0 - base[i]));
      const double logit_plug = std::log(plugged[i] / (1.0 - plugged[i]));
      worst = std::max(worst, std::fabs(logit_base - logit_plug));
    }
  }
  CHECK(worst <= 1e-2);
}

TEST_CASE("light plugin hand instance: one-dim adapter doubles then adds half") {
  // adapter weight 0.5, bias 0: input 0.2 -> 0.2 + 0.5*0.2 = 0.3
  ModelDims dims;
  dims.embedding_dim = 1;
  dims.hidden_dim = 1;
  dims.max_seq_len = 1;
  dims.extractor_layers = 0;
  TrunkParams trunk = build_model(Arch::avg_pool, 1, 1, dims, 1);
  trunk.tensor("emb.user").data.values = {0.2};
  trunk.tensor("emb.item").data.values = {0.0};
  trunk.tensor("cls.w").data.values = {1.0, 0.0, 0.0};  // reads the adapted user slot
  trunk.tensor("cls.b").data.values = {0.0};

  LightPlugin p = init_light(trunk, 1, 0, 0.0);
  p.tensor("plg.a.w").data.values = {0.5};

  Batch b;
  b.users = {0};
  b.items = {0};
  b.sequences = {{-1}};
  const double score = predict_light(trunk, p, b)[0];
  CHECK(score == doctest::Approx(sigmoid(0.3)).epsilon(1e-12));
}

TEST_CASE("plugin_backward gradients match finite differences") {
  Rng rng(8);
  for (Arch arch : {Arch::avg_pool, Arch::recurrent, Arch::target_attention}) {
    TrunkParams trunk = small_trunk(arch, rng.next_u64());
    Batch b = small_batch(rng, trunk.dims, 3);

    // light plugin with non-trivial adapters
    LightPlugin lp = init_light(trunk, 1, rng.next_u64(), 0.05);
    for (double& v : lp.tensor("plg.a.b").data.values) v = rng.uniform(-0.05, 0.05);
    PluginBackward pb = plugin_backward(trunk, lp, b);

    auto loss_fn = [&] { return bce_loss(predict_light(trunk, lp, b), b.labels); };
    GradMap fd_plugin = finite_diff_grad(loss_fn, lp.all_tensors(), 1e-4);
    CHECK(max_rel_error(pb.plugin_grads, fd_plugin) <= 1e-4);

    GradMap fd_trunk = finite_diff_grad(loss_fn, trunk.all_tensors(), 1e-4);
    CHECK(max_rel_error(pb.trunk_grads, fd_trunk) <= 1e-4);

    // naive plugin
    NaivePlugin np = init_naive(trunk, 1);
    for (auto& r : np.residuals)
      for (double& v : r.data.values) v = rng.uniform(-0.05, 0.05);
    PluginBackward nb = plugin_backward(trunk, np, b);
    CHECK(nb.plugin_grads.find("emb.user") == nb.plugin_grads.end());
    CHECK(nb.plugin_grads.find("emb.item") == nb.plugin_grads.end());
    CHECK(nb.trunk_grads.count("emb.user") == 1);

    auto naive_loss = [&] { return bce_loss(predict_naive(trunk, np, b), b.labels); };
    GradMap fd_naive = finite_diff_grad(naive_loss, np.all_tensors(), 1e-4);
    CHECK(max_rel_error(nb.plugin_grads, fd_naive) <= 1e-4);
    GradMap fd_naive_trunk = finite_diff_grad(naive_loss, trunk.all_tensors(), 1e-4);
    CHECK(max_rel_error(nb.trunk_grads, fd_naive_trunk) <= 1e-4);
  }
}

TEST_CASE("group mismatch is rejected") {
  Rng rng(9);
  TrunkParams trunk = small_trunk(Arch::avg_pool, rng.next_u64());
  LightPlugin p = init_light(trunk, 2, 1);
  Batch b = small_batch(rng, trunk.dims, 2);
  b.group = 3;
  CHECK_THROWS_AS(predict_light(trunk, p, b), ArgumentError);
  b.group = 2;
  CHECK_NOTHROW(predict_light(trunk, p, b));
  b.group = 0;  // unset group skips the check
  CHECK_NOTHROW(predict_light(trunk, p, b));
}

TEST_CASE("scores through plugins stay in (0,1)") {
  Rng rng(10);
  TrunkParams trunk = small_trunk(Arch::target_attention, rng.next_u64());
  LightPlugin p = init_light(trunk, 1, 3, 0.5);  // deliberately large adapters
  Batch b = small_batch(rng, trunk.dims, 8);
  for (double s : predict_light(trunk, p, b)) {
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }
}

TEST_SUITE_END();
