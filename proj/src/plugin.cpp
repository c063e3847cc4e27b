#include "longtail/plugin.hpp"

#include "longtail/errors.hpp"
#include "longtail/rng.hpp"

namespace longtail {

namespace {

void check_group(int plugin_group, const Batch& batch) {
  if (batch.group != 0 && batch.group != plugin_group)
    throw ArgumentError("plugin group " + std::to_string(plugin_group) +
                        " does not match batch group " + std::to_string(batch.group));
}

ParamTensor& find_tensor(std::vector<ParamTensor>& v, const std::string& name) {
  for (auto& p : v)
    if (p.name == name) return p;
  throw ArgumentError("no plugin parameter named " + name);
}

const ParamTensor& find_tensor(const std::vector<ParamTensor>& v, const std::string& name) {
  for (const auto& p : v)
    if (p.name == name) return p;
  throw ArgumentError("no plugin parameter named " + name);
}

}  // namespace

ParamTensor& NaivePlugin::tensor(const std::string& name) { return find_tensor(residuals, name); }
const ParamTensor& NaivePlugin::tensor(const std::string& name) const {
  return find_tensor(residuals, name);
}

std::vector<ParamTensor*> NaivePlugin::all_tensors() {
  std::vector<ParamTensor*> out;
  for (auto& p : residuals) out.push_back(&p);
  return out;
}

NaivePlugin init_naive(const TrunkParams& trunk, int group) {
  NaivePlugin p;
  p.group = group;
  for (const auto& t : trunk.params) {
    if (t.section == Section::embedding) continue;
    p.residuals.push_back(ParamTensor{t.name, DenseArray::zeros(t.data.shape), t.section});
  }
  return p;
}

TrunkParams apply_naive(const TrunkParams& trunk, const NaivePlugin& plugin) {
  TrunkParams sum = trunk;
  for (const auto& r : plugin.residuals) {
    if (r.section == Section::embedding)
      throw ArgumentError("naive plugin must not carry embedding residuals");
    if (!sum.has(r.name)) throw ArgumentError("residual for unknown parameter " + r.name);
    ParamTensor& t = sum.tensor(r.name);
    if (!t.data.same_shape(r.data))
      throw ArgumentError("residual shape mismatch at " + r.name);
    t.data.add_scaled(r.data, 1.0);
  }
  return sum;
}

std::vector<double> predict_naive(const TrunkParams& trunk, const NaivePlugin& plugin,
                                  const Batch& batch) {
  check_group(plugin.group, batch);
  return predict(apply_naive(trunk, plugin), batch);
}

PluginBackward plugin_backward(const TrunkParams& trunk, const NaivePlugin& plugin,
                               const Batch& batch) {
  check_group(plugin.group, batch);
  BackwardResult r = backward(apply_naive(trunk, plugin), batch);
  PluginBackward out;
  out.loss = r.loss;
  // d/d(residual) equals d/d(summed parameter); the embedding stays trunk-only
  for (const auto& res : plugin.residuals) out.plugin_grads[res.name] = r.grads.at(res.name);
  out.trunk_grads = std::move(r.grads);
  return out;
}

ParamTensor& LightPlugin::tensor(const std::string& name) { return find_tensor(params, name); }
const ParamTensor& LightPlugin::tensor(const std::string& name) const {
  return find_tensor(params, name);
}

std::vector<ParamTensor*> LightPlugin::all_tensors() {
  std::vector<ParamTensor*> out;
  for (auto& p : params) out.push_back(&p);
  return out;
}

AdapterStack LightPlugin::stack() const {
  AdapterStack s;
  s.a_w = &tensor("plg.a.w").data;
  s.a_b = &tensor("plg.a.b").data;
  s.b_w = &tensor("plg.b.w").data;
  s.b_b = &tensor("plg.b.b").data;
  return s;
}

LightPlugin init_light(const TrunkParams& trunk, int group, std::uint64_t seed,
                       double init_scale) {
  if (init_scale < 0.0) throw ArgumentError("init_light: negative init scale");
  const std::size_t d = trunk.dims.embedding_dim;
  const std::size_t c = trunk.dims.classifier_in(trunk.arch);

  LightPlugin p;
  p.group = group;
  Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(group)));
  auto weight = [&](std::string name, std::size_t rows, std::size_t cols) {
    ParamTensor t{std::move(name), DenseArray::zeros({rows, cols}), Section::extractor};
    for (double& v : t.data.values) v = rng.uniform(-init_scale, init_scale);
    return t;
  };
  p.params.push_back(weight("plg.a.w", d, d));
  p.params.push_back(ParamTensor{"plg.a.b", DenseArray::zeros({d}), Section::extractor});
  p.params.push_back(weight("plg.b.w", c, c));
  p.params.push_back(ParamTensor{"plg.b.b", DenseArray::zeros({c}), Section::classifier});
  return p;
}

std::vector<double> predict_light(const TrunkParams& trunk, const LightPlugin& plugin,
                                  const Batch& batch) {
  check_group(plugin.group, batch);
  return predict_with_adapters(trunk, batch, plugin.stack());
}

PluginBackward plugin_backward(const TrunkParams& trunk, const LightPlugin& plugin,
                               const Batch& batch) {
  check_group(plugin.group, batch);
  AdapterBackwardResult r = backward_with_adapters(trunk, batch, plugin.stack());
  return PluginBackward{r.loss, std::move(r.adapter_grads), std::move(r.trunk_grads)};
}

PluginVariant plugin_variant_from_name(const std::string& name) {
  if (name == "naive") return PluginVariant::naive;
  if (name == "light") return PluginVariant::light;
  throw ArgumentError("unknown plugin variant: " + name);
}

const char* plugin_variant_name(PluginVariant v) {
  return v == PluginVariant::naive ? "naive" : "light";
}

std::vector<double> PluginSet::predict(const TrunkParams& trunk, const Batch& batch,
                                       int group) const {
  if (group < 1 || group > groups())
    throw ArgumentError("PluginSet: no plugin for group " + std::to_string(group));
  if (variant == PluginVariant::naive) return predict_naive(trunk, naive[group - 1], batch);
  return predict_light(trunk, light[group - 1], batch);
}

PluginSet init_plugin_set(const TrunkParams& trunk, PluginVariant variant, int n,
                          std::uint64_t seed, double light_init_scale) {
  PluginSet set;
  set.variant = variant;
  for (int j = 1; j <= n; ++j) {
    if (variant == PluginVariant::naive)
      set.naive.push_back(init_naive(trunk, j));
    else
      set.light.push_back(init_light(trunk, j, seed, light_init_scale));
  }
  return set;
}

}  // namespace longtail
