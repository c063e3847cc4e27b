#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "longtail/dataio.hpp"
#include "longtail/gradagg.hpp"
#include "longtail/grouping.hpp"
#include "longtail/model.hpp"
#include "longtail/optimizer.hpp"
#include "longtail/plugin.hpp"

namespace longtail {

struct TrainConfig {
  double stage1_lr = 1e-3;
  double stage2_plugin_lr = 1e-4;  // 1e-5 is the sane default for naive plugins
  double stage2_trunk_lr = 1e-4;   // must stay <= stage1_lr
  AdamConfig adam;
  std::size_t batch_size = 512;
  std::size_t minibatch_size = 0;  // 0 -> batch_size / n, floored, at least 1
  int stage1_epochs = 20;
  int stage2_epochs = 10;
  int patience = 3;                // epochs without val improvement before stopping
  double validation_fraction = 0.1;
  PluginVariant plugin = PluginVariant::light;
  double light_init_scale = 1e-3;
  std::uint64_t seed = 1;
  bool sequential = true;          // parallel mode fans per-group backward out to threads
  std::string grad_norm_csv;       // when set, per-batch per-group gradient norms land here

  void validate() const;
  std::size_t resolved_minibatch(int n) const;
};

struct EpochStats {
  int stage = 1;
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::vector<double> group_val_loss;  // indexed j-1
};

struct StageResult {
  TrunkParams trunk;
  PluginSet plugins;  // populated by stage II only
  std::vector<EpochStats> curve;
  int epochs_run = 0;
  double best_val_loss = 0.0;
};

// Snapshot handed to the per-epoch callback, e.g. for checkpointing.
// Plugin fields are null during stage I.
struct EpochSnapshot {
  const EpochStats* stats = nullptr;
  const TrunkParams* trunk = nullptr;
  const PluginSet* plugins = nullptr;
  const AdamOptimizer* trunk_opt = nullptr;
  const std::vector<AdamOptimizer>* plugin_opts = nullptr;
};

using EpochCallback = std::function<void(const EpochSnapshot&)>;

Batch make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx,
                 int group = 0);

// Stage I: per global batch, one backward per group mini-batch, gradients
// queued and aggregated, one trunk update.
StageResult train_stage1(const TrainConfig& cfg, const std::vector<Sample>& train,
                         const GroupAssignment& assignment, TrunkParams trunk,
                         const EpochCallback& on_epoch = {});

// Stage II: per group mini-batch, update that group's plugin immediately and
// queue the trunk gradients; aggregate and update the trunk once per batch
// with the lower rate. Fresh optimizer state for trunk and plugins.
StageResult train_stage2(const TrainConfig& cfg, const std::vector<Sample>& train,
                         const GroupAssignment& assignment, TrunkParams trunk,
                         const EpochCallback& on_epoch = {});

}  // namespace longtail
