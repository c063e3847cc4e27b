#include "longtail/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <limits>

#include "longtail/numeric.hpp"
#include "longtail/rng.hpp"

namespace longtail {

void TrainConfig::validate() const {
  if (stage1_lr <= 0.0 || stage2_plugin_lr <= 0.0)
    throw ConfigError("train: learning rates must be positive");
  if (stage2_trunk_lr < 0.0)
    throw ConfigError("train: stage2 trunk lr must be >= 0 (0 freezes the trunk)");
  if (stage2_trunk_lr > stage1_lr)
    throw ConfigError("train: stage2 trunk lr must not exceed stage1 lr");
  if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  if (stage1_epochs < 1 || stage2_epochs < 1)
    throw ConfigError("train: epochs must be >= 1");
  if (patience < 1) throw ConfigError("train: patience must be >= 1");
  if (validation_fraction < 0.0 || validation_fraction >= 1.0)
    throw ConfigError("train: validation fraction must be in [0, 1)");
}

std::size_t TrainConfig::resolved_minibatch(int n) const {
  if (minibatch_size > 0) return minibatch_size;
  return std::max<std::size_t>(1, batch_size / static_cast<std::size_t>(n));
}

Batch make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx,
                 int group) {
  Batch b;
  b.group = group;
  b.users.reserve(idx.size());
  b.items.reserve(idx.size());
  b.sequences.reserve(idx.size());
  b.labels.reserve(idx.size());
  for (std::size_t i : idx) {
    const Sample& s = samples[i];
    b.users.push_back(s.user);
    b.items.push_back(s.item);
    b.sequences.push_back(s.sequence);
    b.labels.push_back(s.label);
  }
  return b;
}

namespace {

struct DataLayout {
  std::vector<std::size_t> train_idx;             // indices into `samples`
  std::vector<int> train_group;                   // 1..n, parallel to train_idx
  std::vector<std::vector<std::size_t>> val_by_group;  // per group, indices into `samples`
  std::size_t val_total = 0;
};

// Stratified holdout: a seeded prefix of every group's samples becomes the
// validation slice, so each group keeps both train and val presence.
DataLayout layout_data(const std::vector<Sample>& samples, const GroupAssignment& assignment,
                       double val_fraction, std::uint64_t seed) {
  const int n = assignment.n;
  std::vector<std::vector<std::size_t>> by_group(n);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int g = samples[i].group;
    if (g < 1 || g > n) {
      auto it = assignment.group_of.find(samples[i].user);
      if (it == assignment.group_of.end())
        throw ArgumentError("trainer: sample user missing from assignment");
      by_group[it->second - 1].push_back(i);
    } else {
      by_group[g - 1].push_back(i);
    }
  }

  DataLayout out;
  out.val_by_group.assign(n, {});
  for (int g = 0; g < n; ++g) {
    auto& idx = by_group[g];
    if (idx.empty())
      throw ConfigError("trainer: group " + std::to_string(g + 1) + " has no samples");
    Rng rng(Rng::derive(seed, 0x5a17 + static_cast<std::uint64_t>(g)));
    rng.shuffle(idx);
    std::size_t val_count =
        static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(idx.size())));
    if (val_count >= idx.size()) val_count = idx.size() - 1;  // keep the group trainable
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (k < val_count) {
        out.val_by_group[g].push_back(idx[k]);
        ++out.val_total;
      } else {
        out.train_idx.push_back(idx[k]);
        out.train_group.push_back(g + 1);
      }
    }
  }
  return out;
}

double mean_bce(const std::vector<double>& scores, const Batch& batch) {
  return bce_loss(scores, batch.labels);
}

// Per-group validation loss; `score_fn` hides whether a plugin is plugged in.
std::pair<double, std::vector<double>> validation_losses(
    const std::vector<Sample>& samples, const DataLayout& layout,
    const std::function<std::vector<double>(const Batch&, int)>& score_fn) {
  const int n = static_cast<int>(layout.val_by_group.size());
  std::vector<double> per_group(n, 0.0);
  double weighted = 0.0;
  std::size_t total = 0;
  for (int g = 0; g < n; ++g) {
    const auto& idx = layout.val_by_group[g];
    if (idx.empty()) {
      per_group[g] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    Batch b = make_batch(samples, idx, g + 1);
    const double loss = mean_bce(score_fn(b, g + 1), b);
    per_group[g] = loss;
    weighted += loss * static_cast<double>(idx.size());
    total += idx.size();
  }
  const double overall = total > 0 ? weighted / static_cast<double>(total)
                                   : std::numeric_limits<double>::quiet_NaN();
  return {overall, per_group};
}

class GradNormDump {
 public:
  explicit GradNormDump(const std::string& path) {
    if (path.empty()) return;
    out_.open(path);
    if (!out_) throw ArgumentError("cannot write " + path);
    out_ << "stage,epoch,batch,group,grad_norm\n";
  }
  void write(int stage, int epoch, std::size_t batch, const GradientQueue& queue) {
    if (!out_.is_open()) return;
    for (const auto& [g, norm] : queue.slot_norms())
      out_ << stage << ',' << epoch << ',' << batch << ',' << g << ',' << norm << '\n';
  }

 private:
  std::ofstream out_;
};

// Shared two-stage loop. `per_group_backward` returns the trunk GradMap to
// queue plus the mini-batch loss, updating plugins as a side effect in stage
// II. Early-stops when validation loss fails to improve `patience` epochs in
// a row.
template <typename BackwardFn, typename ScoreFn>
StageResult run_stage(int stage, const TrainConfig& cfg, const std::vector<Sample>& train,
                      const GroupAssignment& assignment, TrunkParams trunk,
                      PluginSet plugins, BackwardFn per_group_backward, ScoreFn score_fn,
                      double trunk_lr, int max_epochs, const EpochCallback& on_epoch,
                      const std::vector<AdamOptimizer>* plugin_opts) {
  const int n = assignment.n;
  DataLayout layout =
      layout_data(train, assignment, cfg.validation_fraction, cfg.seed);

  GroupedSampleStream stream(layout.train_group, n, cfg.resolved_minibatch(n),
                             Rng::derive(cfg.seed, 0xb47c + static_cast<std::uint64_t>(stage)));
  GroupWeights weights = GroupWeights::uniform(assignment);
  GradientQueue queue(n);
  AdamOptimizer trunk_opt(cfg.adam);
  GradNormDump dump(cfg.grad_norm_csv);

  StageResult res;
  res.plugins = std::move(plugins);
  res.best_val_loss = std::numeric_limits<double>::infinity();
  int epochs_since_best = 0;

  TrunkParams& model = trunk;
  for (int epoch = 1; epoch <= max_epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    const std::size_t batches = stream.batches_per_epoch();
    for (std::size_t b = 0; b < batches; ++b) {
      auto mini = stream.next_batch();

      if (cfg.sequential) {
        for (int g = 1; g <= n; ++g) {
          auto [grads, loss] = per_group_backward(model, res.plugins, mini[g - 1], g);
          queue.push(g, std::move(grads));
          loss_sum += loss;
          ++loss_count;
        }
      } else {
        // per-group backward is independent; plugin updates commute across
        // groups, so fan out then apply in group order
        std::vector<std::future<std::pair<GradMap, double>>> futs;
        futs.reserve(n);
        for (int g = 1; g <= n; ++g)
          futs.push_back(std::async(std::launch::async, [&, g] {
            return per_group_backward(model, res.plugins, mini[g - 1], g);
          }));
        for (int g = 1; g <= n; ++g) {
          auto [grads, loss] = futs[g - 1].get();
          queue.push(g, std::move(grads));
          loss_sum += loss;
          ++loss_count;
        }
      }

      dump.write(stage, epoch, b, queue);
      GradMap agg = queue.aggregate(weights);
      if (trunk_lr > 0.0) trunk_opt.step(model.all_tensors(), agg, trunk_lr);
    }

    EpochStats stats;
    stats.stage = stage;
    stats.epoch = epoch;
    stats.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    auto [val, group_val] = validation_losses(train, layout, [&](const Batch& batch, int g) {
      return score_fn(model, res.plugins, batch, g);
    });
    stats.val_loss = val;
    stats.group_val_loss = std::move(group_val);
    res.curve.push_back(stats);
    res.epochs_run = epoch;
    if (on_epoch) {
      EpochSnapshot snap;
      snap.stats = &res.curve.back();
      snap.trunk = &model;
      snap.plugins = stage == 2 ? &res.plugins : nullptr;
      snap.trunk_opt = &trunk_opt;
      snap.plugin_opts = plugin_opts;
      on_epoch(snap);
    }

    if (layout.val_total > 0) {
      if (stats.val_loss < res.best_val_loss - 1e-12) {
        res.best_val_loss = stats.val_loss;
        epochs_since_best = 0;
      } else if (++epochs_since_best >= cfg.patience) {
        break;
      }
    }
  }

  res.trunk = std::move(trunk);
  return res;
}

}  // namespace

StageResult train_stage1(const TrainConfig& cfg, const std::vector<Sample>& train,
                         const GroupAssignment& assignment, TrunkParams trunk,
                         const EpochCallback& on_epoch) {
  cfg.validate();
  auto backward_fn = [&train](TrunkParams& model, PluginSet&,
                              const std::vector<std::size_t>& idx, int g) {
    Batch b = make_batch(train, idx, g);
    BackwardResult r = backward(model, b);
    return std::make_pair(std::move(r.grads), r.loss);
  };
  auto score_fn = [](const TrunkParams& model, const PluginSet&, const Batch& batch, int) {
    return predict(model, batch);
  };
  return run_stage(1, cfg, train, assignment, std::move(trunk), PluginSet{}, backward_fn,
                   score_fn, cfg.stage1_lr, cfg.stage1_epochs, on_epoch, nullptr);
}

StageResult train_stage2(const TrainConfig& cfg, const std::vector<Sample>& train,
                         const GroupAssignment& assignment, TrunkParams trunk,
                         const EpochCallback& on_epoch) {
  cfg.validate();
  PluginSet plugins = init_plugin_set(trunk, cfg.plugin, assignment.n,
                                      Rng::derive(cfg.seed, 0x91e5), cfg.light_init_scale);
  auto plugin_opts = std::make_shared<std::vector<AdamOptimizer>>();
  for (int j = 0; j < assignment.n; ++j) plugin_opts->emplace_back(cfg.adam);

  auto backward_fn = [&train, &cfg, plugin_opts](TrunkParams& model, PluginSet& ps,
                                                 const std::vector<std::size_t>& idx, int g) {
    Batch b = make_batch(train, idx, g);
    PluginBackward r;
    std::vector<ParamTensor*> plugin_tensors;
    if (ps.variant == PluginVariant::naive) {
      r = plugin_backward(model, ps.naive[g - 1], b);
      plugin_tensors = ps.naive[g - 1].all_tensors();
    } else {
      r = plugin_backward(model, ps.light[g - 1], b);
      plugin_tensors = ps.light[g - 1].all_tensors();
    }
    // the plugin learns its group right away; the trunk gradient waits in
    // the queue for the batch-level aggregate
    (*plugin_opts)[g - 1].step(plugin_tensors, r.plugin_grads, cfg.stage2_plugin_lr);
    return std::make_pair(std::move(r.trunk_grads), r.loss);
  };
  auto score_fn = [](const TrunkParams& model, const PluginSet& ps, const Batch& batch,
                     int g) { return ps.predict(model, batch, g); };
  return run_stage(2, cfg, train, assignment, std::move(trunk), std::move(plugins),
                   backward_fn, score_fn, cfg.stage2_trunk_lr, cfg.stage2_epochs, on_epoch,
                   plugin_opts.get());
}

}  // namespace longtail
