#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "longtail/array.hpp"

namespace longtail {

enum class Arch { avg_pool, recurrent, target_attention };

const char* arch_name(Arch a);
Arch arch_from_name(const std::string& name);

struct ModelDims {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t embedding_dim = 16;    // d
  std::size_t hidden_dim = 32;       // extractor width and GRU state size
  std::size_t attention_dim = 16;    // attention-score MLP width
  std::size_t max_seq_len = 50;      // L
  std::size_t extractor_layers = 1;  // 0 = pass-through extractor

  std::size_t pooled_dim(Arch a) const {
    return a == Arch::recurrent ? hidden_dim : embedding_dim;
  }
  std::size_t concat_dim(Arch a) const { return 2 * embedding_dim + pooled_dim(a); }
  std::size_t classifier_in(Arch a) const {
    return extractor_layers == 0 ? concat_dim(a) : hidden_dim;
  }
};

// Trunk parameters, partitioned into embedding / extractor / classifier.
// Wiring: score = sigmoid(classifier(extractor([user_emb; item_emb; pooled
// history]))). Pooling is arch-specific: masked mean, GRU final state, or
// target attention over history items.
struct TrunkParams {
  Arch arch = Arch::avg_pool;
  ModelDims dims;
  std::vector<ParamTensor> params;

  ParamTensor& tensor(const std::string& name);
  const ParamTensor& tensor(const std::string& name) const;
  bool has(const std::string& name) const;
  std::vector<ParamTensor*> all_tensors();
  std::vector<ParamTensor*> section_tensors(Section s);
  std::vector<const ParamTensor*> section_tensors(Section s) const;
  GradMap zero_grads() const;
};

struct Batch {
  std::vector<std::int64_t> users;
  std::vector<std::int64_t> items;
  std::vector<std::vector<std::int64_t>> sequences;  // pad id = -1, length <= L
  std::vector<double> labels;                        // 0/1; may be empty for predict
  int group = 0;                                     // 0 = unset

  std::size_t size() const { return users.size(); }
};

// Seeded uniform(-0.1, 0.1) weights, zero biases. Same seed, same bits.
TrunkParams build_model(Arch arch, std::size_t num_users, std::size_t num_items,
                        ModelDims dims, std::uint64_t seed);

// Residual adapters at the two section boundaries (the lightweight plugin).
// `a` maps every embedding vector d->d before anything downstream sees it;
// `b` maps the extractor output c->c before the classifier. out = in + W*in + bias.
struct AdapterStack {
  const DenseArray* a_w = nullptr;
  const DenseArray* a_b = nullptr;
  const DenseArray* b_w = nullptr;
  const DenseArray* b_b = nullptr;

  bool empty() const { return a_w == nullptr && b_w == nullptr; }
};

std::vector<double> predict(const TrunkParams& trunk, const Batch& batch);

struct BackwardResult {
  double loss = 0.0;
  GradMap grads;  // one entry per trunk parameter
};

BackwardResult backward(const TrunkParams& trunk, const Batch& batch);

// Adapter-aware paths shared with the plugin module.
std::vector<double> predict_with_adapters(const TrunkParams& trunk, const Batch& batch,
                                          const AdapterStack& adapters);

struct AdapterBackwardResult {
  double loss = 0.0;
  GradMap trunk_grads;    // every trunk parameter, taken through the adapters
  GradMap adapter_grads;  // keys plg.a.{w,b}, plg.b.{w,b}; empty stack -> empty
};

AdapterBackwardResult backward_with_adapters(const TrunkParams& trunk, const Batch& batch,
                                             const AdapterStack& adapters);

}  // namespace longtail
