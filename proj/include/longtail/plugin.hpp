#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "longtail/model.hpp"

namespace longtail {

// Full-size parameter residuals on the extractor and classifier; the
// embedding table stays shared because per-group data is too sparse to
// retrain it.
struct NaivePlugin {
  int group = 0;
  std::vector<ParamTensor> residuals;

  ParamTensor& tensor(const std::string& name);
  const ParamTensor& tensor(const std::string& name) const;
  std::vector<ParamTensor*> all_tensors();
};

NaivePlugin init_naive(const TrunkParams& trunk, int group);

// trunk with extractor/classifier summed with the residuals
TrunkParams apply_naive(const TrunkParams& trunk, const NaivePlugin& plugin);

std::vector<double> predict_naive(const TrunkParams& trunk, const NaivePlugin& plugin,
                                  const Batch& batch);

// Residual adapters at the embedding->extractor and extractor->classifier
// boundaries. Near-zero init keeps the stage-II starting point at the trunk.
struct LightPlugin {
  int group = 0;
  std::vector<ParamTensor> params;  // plg.a.{w,b}, plg.b.{w,b}

  ParamTensor& tensor(const std::string& name);
  const ParamTensor& tensor(const std::string& name) const;
  std::vector<ParamTensor*> all_tensors();
  AdapterStack stack() const;
};

LightPlugin init_light(const TrunkParams& trunk, int group, std::uint64_t seed,
                       double init_scale = 1e-3);

std::vector<double> predict_light(const TrunkParams& trunk, const LightPlugin& plugin,
                                  const Batch& batch);

struct PluginBackward {
  double loss = 0.0;
  GradMap plugin_grads;  // plugin parameters only
  GradMap trunk_grads;   // every trunk parameter, through the plugged forward
};

PluginBackward plugin_backward(const TrunkParams& trunk, const NaivePlugin& plugin,
                               const Batch& batch);
PluginBackward plugin_backward(const TrunkParams& trunk, const LightPlugin& plugin,
                               const Batch& batch);

enum class PluginVariant { naive, light };
PluginVariant plugin_variant_from_name(const std::string& name);
const char* plugin_variant_name(PluginVariant v);

// One plugin per group, all of one variant.
struct PluginSet {
  PluginVariant variant = PluginVariant::light;
  std::vector<NaivePlugin> naive;  // indexed j-1
  std::vector<LightPlugin> light;

  int groups() const {
    return static_cast<int>(variant == PluginVariant::naive ? naive.size() : light.size());
  }
  std::vector<double> predict(const TrunkParams& trunk, const Batch& batch, int group) const;
};

PluginSet init_plugin_set(const TrunkParams& trunk, PluginVariant variant, int n,
                          std::uint64_t seed, double light_init_scale = 1e-3);

}  // namespace longtail
