#include "longtail/verify.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "longtail/errors.hpp"
#include "longtail/gradagg.hpp"
#include "longtail/metrics.hpp"
#include "longtail/model.hpp"
#include "longtail/numeric.hpp"
#include "longtail/optimizer.hpp"
#include "longtail/plugin.hpp"
#include "longtail/rng.hpp"

namespace longtail {

namespace {

Batch random_batch(Rng& rng, const ModelDims& dims, std::size_t batch, bool with_empty_seq) {
  Batch b;
  for (std::size_t i = 0; i < batch; ++i) {
    b.users.push_back(static_cast<std::int64_t>(rng.uniform_int(dims.num_users)));
    b.items.push_back(static_cast<std::int64_t>(rng.uniform_int(dims.num_items)));
    std::vector<std::int64_t> seq(dims.max_seq_len, -1);
    const std::size_t real =
        (with_empty_seq && i == 0) ? 0 : rng.uniform_int(dims.max_seq_len) + 1;
    for (std::size_t t = dims.max_seq_len - real; t < dims.max_seq_len; ++t)
      seq[t] = static_cast<std::int64_t>(rng.uniform_int(dims.num_items));
    b.sequences.push_back(std::move(seq));
    b.labels.push_back(rng.uniform() < 0.5 ? 0.0 : 1.0);
  }
  return b;
}

GradMap random_gradmap(Rng& rng) {
  GradMap g;
  const int entries = 2 + static_cast<int>(rng.uniform_int(3));
  for (int e = 0; e < entries; ++e) {
    const std::size_t rows = 1 + rng.uniform_int(4), cols = 1 + rng.uniform_int(5);
    DenseArray a = DenseArray::zeros({rows, cols});
    for (double& v : a.values) v = rng.uniform(-1.0, 1.0);
    g.emplace("p" + std::to_string(e), std::move(a));
  }
  return g;
}

bool bitwise_equal(const GradMap& a, const GradMap& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, arr] : a) {
    auto it = b.find(name);
    if (it == b.end() || !it->second.same_shape(arr)) return false;
    if (std::memcmp(arr.values.data(), it->second.values.data(),
                    arr.values.size() * sizeof(double)) != 0)
      return false;
  }
  return true;
}

std::string params_bytes(const std::vector<ParamTensor>& params) {
  std::string out;
  for (const auto& p : params)
    out.append(reinterpret_cast<const char*>(p.data.values.data()),
               p.data.values.size() * sizeof(double));
  return out;
}

}  // namespace

VerifyResult verify_gradients(int instances_per_arch, std::uint64_t seed) {
  VerifyResult res{"gradients", true, ""};
  double worst = 0.0;
  std::ostringstream detail;
  Rng rng(seed);
  for (Arch arch : {Arch::avg_pool, Arch::recurrent, Arch::target_attention}) {
    double arch_worst = 0.0;
    for (int inst = 0; inst < instances_per_arch; ++inst) {
      ModelDims dims;
      dims.embedding_dim = 1 + rng.uniform_int(4);   // <= 4
      dims.hidden_dim = 1 + rng.uniform_int(4);
      dims.attention_dim = 1 + rng.uniform_int(3);
      dims.max_seq_len = 1 + rng.uniform_int(6);     // <= 6
      dims.extractor_layers = rng.uniform_int(3);    // 0..2
      const std::size_t users = 3 + rng.uniform_int(4), items = 4 + rng.uniform_int(5);
      TrunkParams trunk = build_model(arch, users, items, dims, rng.next_u64());
      Batch batch = random_batch(rng, trunk.dims, 1 + rng.uniform_int(4), inst % 4 == 0);

      BackwardResult analytic = backward(trunk, batch);
      auto loss_fn = [&] { return bce_loss(predict(trunk, batch), batch.labels); };
      GradMap fd = finite_diff_grad(loss_fn, trunk.all_tensors(), 1e-4);
      arch_worst = std::max(arch_worst, max_rel_error(analytic.grads, fd));
    }
    detail << arch_name(arch) << " max_rel_err=" << arch_worst << "  ";
    worst = std::max(worst, arch_worst);
  }
  res.passed = worst <= 1e-4;
  res.detail = detail.str();
  return res;
}

VerifyResult verify_aggregation(int queues, std::uint64_t seed) {
  VerifyResult res{"aggregation", true, ""};
  Rng rng(seed);
  double worst_abs = 0.0;
  const int group_counts[] = {1, 2, 3, 5};

  for (int q = 0; q < queues; ++q) {
    const int n = group_counts[rng.uniform_int(4)];
    GroupAssignment a;
    a.n = n;
    a.total = 0;
    for (int j = 0; j < n; ++j) {
      a.counts.push_back(1 + static_cast<std::int64_t>(rng.uniform_int(100)));
      a.total += a.counts.back();
    }
    GroupWeights w = GroupWeights::uniform(a);

    std::vector<GradMap> grads;
    GradMap shape_ref = random_gradmap(rng);
    for (int j = 0; j < n; ++j) {
      GradMap g;
      for (const auto& [name, arr] : shape_ref) {
        DenseArray x = DenseArray::zeros(arr.shape);
        for (double& v : x.values) v = rng.uniform(-1.0, 1.0);
        g.emplace(name, std::move(x));
      }
      grads.push_back(std::move(g));
    }

    // push in a shuffled order; the aggregate must not care
    std::vector<int> order(n);
    for (int j = 0; j < n; ++j) order[j] = j + 1;
    rng.shuffle(order);
    GradientQueue queue(n);
    for (int j : order) queue.push(j, grads[j - 1]);
    GradMap got = queue.aggregate(w);

    // independent oracle: coefficient written as prior * (N / n_j)
    GradMap expect;
    for (const auto& [name, arr] : shape_ref) {
      DenseArray acc = DenseArray::zeros(arr.shape);
      for (int j = 1; j <= n; ++j) {
        const double coeff =
            (1.0 / static_cast<double>(n)) *
            (static_cast<double>(a.total) / static_cast<double>(a.counts[j - 1]));
        for (std::size_t i = 0; i < acc.numel(); ++i)
          acc.values[i] += coeff * grads[j - 1].at(name).values[i];
      }
      expect.emplace(name, std::move(acc));
    }
    for (const auto& [name, arr] : expect) {
      const DenseArray& g = got.at(name);
      for (std::size_t i = 0; i < arr.numel(); ++i)
        worst_abs = std::max(worst_abs, std::fabs(arr.values[i] - g.values[i]));
    }

    if (n == 1 && !bitwise_equal(got, grads[0])) {
      res.passed = false;
      res.detail = "n=1 aggregate not bit-identical";
      return res;
    }
  }

  // equal-mass identity: weights collapse to exactly 1
  {
    const int n = 4;
    GroupAssignment a;
    a.n = n;
    a.counts.assign(n, 25);
    a.total = 100;
    GroupWeights w = GroupWeights::uniform(a);
    GradMap ref = random_gradmap(rng);
    std::vector<GradMap> grads;
    GradientQueue queue(n);
    for (int j = 1; j <= n; ++j) {
      GradMap g;
      for (const auto& [name, arr] : ref) {
        DenseArray x = DenseArray::zeros(arr.shape);
        for (double& v : x.values) v = rng.uniform(-1.0, 1.0);
        g.emplace(name, std::move(x));
      }
      grads.push_back(g);
      queue.push(j, std::move(g));
    }
    GradMap got = queue.aggregate(w);
    GradMap plain_sum;
    for (const auto& g : grads) add_scaled(plain_sum, g, 1.0);
    if (!bitwise_equal(got, plain_sum)) {
      res.passed = false;
      res.detail = "equal-mass aggregate != exact sum";
      return res;
    }
  }

  std::ostringstream detail;
  detail << queues << " queues, worst abs err=" << worst_abs;
  res.detail = detail.str();
  res.passed = res.passed && worst_abs <= 1e-12;
  return res;
}

VerifyResult verify_plugins(std::uint64_t seed) {
  VerifyResult res{"plugins", true, ""};
  Rng rng(seed);
  std::ostringstream detail;

  for (Arch arch : {Arch::avg_pool, Arch::recurrent, Arch::target_attention}) {
    ModelDims dims;
    dims.embedding_dim = 4;
    dims.hidden_dim = 5;
    dims.attention_dim = 3;
    dims.max_seq_len = 5;
    TrunkParams trunk = build_model(arch, 12, 15, dims, rng.next_u64());
    Batch batch = random_batch(rng, trunk.dims, 6, true);
    const std::vector<double> base = predict(trunk, batch);

    // identity at zero
    NaivePlugin np = init_naive(trunk, 1);
    const std::vector<double> naive_scores = predict_naive(trunk, np, batch);
    for (std::size_t i = 0; i < base.size(); ++i) {
      if (std::memcmp(&base[i], &naive_scores[i], sizeof(double)) != 0) {
        res.passed = false;
        res.detail = "naive zero plugin not bit-exact";
        return res;
      }
    }
    LightPlugin lp0 = init_light(trunk, 1, rng.next_u64(), 0.0);
    const std::vector<double> light_scores = predict_light(trunk, lp0, batch);
    for (std::size_t i = 0; i < base.size(); ++i) {
      if (std::fabs(base[i] - light_scores[i]) > 1e-9) {
        res.passed = false;
        res.detail = "light zero plugin deviates beyond 1e-9";
        return res;
      }
    }

    // isolation: a few optimizer steps on group 1's plugin must leave the
    // trunk and every other plugin bit-unchanged
    PluginSet set = init_plugin_set(trunk, PluginVariant::light, 3, rng.next_u64());
    const std::string trunk_before = params_bytes(trunk.params);
    std::string others_before = params_bytes(set.light[1].params);
    others_before += params_bytes(set.light[2].params);

    AdamOptimizer opt;
    Batch b1 = batch;
    b1.group = 1;
    for (int step = 0; step < 3; ++step) {
      PluginBackward pb = plugin_backward(trunk, set.light[0], b1);
      opt.step(set.light[0].all_tensors(), pb.plugin_grads, 1e-3);
    }
    std::string others_after = params_bytes(set.light[1].params);
    others_after += params_bytes(set.light[2].params);
    if (params_bytes(trunk.params) != trunk_before || others_after != others_before) {
      res.passed = false;
      res.detail = "plugin update leaked into trunk or sibling plugins";
      return res;
    }
    detail << arch_name(arch) << " ok  ";
  }
  res.detail = detail.str();
  return res;
}

VerifyResult verify_metrics(std::size_t max_side, std::uint64_t seed) {
  VerifyResult res{"metrics", true, ""};
  Rng rng(seed);

  auto brute = [](const std::vector<double>& pos, const std::vector<double>& neg,
                  TiePolicy tie) {
    std::uint64_t num2 = 0;
    for (double p : pos)
      for (double v : neg) {
        if (v < p) num2 += 2;
        else if (v == p && tie == TiePolicy::half) num2 += 1;
      }
    return static_cast<double>(num2) /
           (2.0 * static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
  };

  for (int round = 0; round < 12; ++round) {
    const std::size_t np = round < 10 ? 1 + rng.uniform_int(50) : max_side;
    const std::size_t nn = round < 10 ? 1 + rng.uniform_int(50) : max_side;
    std::vector<double> pos(np), neg(nn);
    // coarse grid so ties actually occur
    for (double& v : pos) v = std::floor(rng.uniform() * 32.0) / 32.0;
    for (double& v : neg) v = std::floor(rng.uniform() * 32.0) / 32.0;
    for (TiePolicy tie : {TiePolicy::strict, TiePolicy::half}) {
      const double fast = auc(pos, neg, tie);
      const double slow = brute(pos, neg, tie);
      if (fast != slow) {
        res.passed = false;
        res.detail = "auc mismatch vs brute force";
        return res;
      }
    }
  }

  // hand values
  const std::map<std::int64_t, int> ranks{{1, 1}, {2, 10}};
  bool ok = true;
  ok = ok && hitrate_at_k({{1, 1}, {2, 1}}, 5) == 1.0;
  ok = ok && hitrate_at_k(ranks, 5) == 0.5;
  ok = ok && std::fabs(ndcg_at_k({{1, 2}}, 2) - 1.0 / std::log2(3.0)) < 1e-12;
  ok = ok && ndcg_at_k({{1, 6}}, 5) == 0.0;
  ok = ok && auc(std::vector<double>{0.9}, std::vector<double>{0.1, 0.5}) == 1.0;
  ok = ok && auc(std::vector<double>{0.3}, std::vector<double>{0.5, 0.1}) == 0.5;
  ok = ok && auc(std::vector<double>{0.5}, std::vector<double>{0.5}, TiePolicy::strict) == 0.0;
  ok = ok && auc(std::vector<double>{0.5}, std::vector<double>{0.5}, TiePolicy::half) == 0.5;
  if (!ok) {
    res.passed = false;
    res.detail = "hand-value check failed";
    return res;
  }
  res.detail = "pair-count oracle exact up to " + std::to_string(max_side) + "x" +
               std::to_string(max_side);
  return res;
}

std::vector<VerifyResult> run_verify(const std::string& name) {
  std::vector<VerifyResult> out;
  const bool all = name == "all";
  if (all || name == "gradients") out.push_back(verify_gradients());
  if (all || name == "aggregation") out.push_back(verify_aggregation());
  if (all || name == "plugins") out.push_back(verify_plugins());
  if (all || name == "metrics") out.push_back(verify_metrics());
  if (out.empty()) throw ArgumentError("unknown verify suite: " + name);
  return out;
}

}  // namespace longtail
