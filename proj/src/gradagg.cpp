#include "longtail/gradagg.hpp"

#include <cmath>

#include "longtail/errors.hpp"

namespace longtail {

GroupWeights GroupWeights::uniform(const GroupAssignment& a) {
  GroupWeights w;
  w.n = a.n;
  w.total = a.total;
  w.counts = a.counts;
  return w;
}

GroupWeights GroupWeights::with_prior(const GroupAssignment& a, std::vector<double> prior) {
  if (prior.size() != static_cast<std::size_t>(a.n))
    throw ArgumentError("GroupWeights: prior size != n");
  double sum = 0.0;
  for (double p : prior) {
    if (p < 0.0) throw ArgumentError("GroupWeights: negative prior");
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw ArgumentError("GroupWeights: prior must sum to 1");
  GroupWeights w = uniform(a);
  w.prior = std::move(prior);
  return w;
}

double GroupWeights::effective_weight(int j) const {
  if (j < 1 || j > n) throw ArgumentError("effective_weight: unknown group");
  if (counts[j - 1] <= 0) throw ArgumentError("effective_weight: nonpositive group count");
  if (prior.empty()) {
    // uniform prior: N / (n * n_j) in one division, so equal-mass groups get
    // weight exactly 1.0
    return static_cast<double>(total) /
           static_cast<double>(static_cast<std::int64_t>(n) * counts[j - 1]);
  }
  return prior[j - 1] * (static_cast<double>(total) / static_cast<double>(counts[j - 1]));
}

GradientQueue::GradientQueue(int n) : n_(n) {
  if (n < 1) throw ArgumentError("GradientQueue: n must be >= 1");
}

void GradientQueue::push(int j, GradMap grads) {
  if (j < 1 || j > n_) throw ArgumentError("GradientQueue: group id out of range");
  if (slots_.count(j)) throw StateError("GradientQueue: group already queued");
  if (!slots_.empty()) {
    const GradMap& ref = slots_.begin()->second;
    if (ref.size() != grads.size())
      throw ArgumentError("GradientQueue: entry count differs from queued gradients");
    for (const auto& [name, arr] : grads) {
      auto it = ref.find(name);
      if (it == ref.end() || !it->second.same_shape(arr))
        throw ArgumentError("GradientQueue: shape mismatch at " + name);
    }
  }
  slots_.emplace(j, std::move(grads));
}

GradMap GradientQueue::aggregate(const GroupWeights& weights) {
  if (weights.n != n_) throw ArgumentError("aggregate: weights built for different n");
  if (!ready()) throw StateError("aggregate: queue holds " + std::to_string(slots_.size()) +
                                 " of " + std::to_string(n_) + " groups");
  GradMap out;
  for (const auto& [j, grads] : slots_) {  // std::map: ascending group order
    const double w = weights.effective_weight(j);
    if (n_ == 1 && w == 1.0) {
      out = grads;  // bit-identical passthrough
      break;
    }
    add_scaled(out, grads, w);
  }
  slots_.clear();
  return out;
}

std::vector<std::pair<int, double>> GradientQueue::slot_norms() const {
  std::vector<std::pair<int, double>> out;
  out.reserve(slots_.size());
  for (const auto& [j, grads] : slots_) out.emplace_back(j, grad_norm(grads));
  return out;
}

}  // namespace longtail
