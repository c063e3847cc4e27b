#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "longtail/array.hpp"
#include "longtail/grouping.hpp"

namespace longtail {

// Aggregation weights: one gradient per activeness value z, combined with
// the prior P(z). With the default uniform prior the per-group coefficient
// is (1/n) * (N / n_j), the inverse-frequency correction.
struct GroupWeights {
  int n = 1;
  std::int64_t total = 0;                // N
  std::vector<std::int64_t> counts;      // n_j, indexed j-1
  std::vector<double> prior;             // empty = uniform

  static GroupWeights uniform(const GroupAssignment& a);
  static GroupWeights with_prior(const GroupAssignment& a, std::vector<double> prior);

  double effective_weight(int j) const;  // prior(j) * N / n_j
};

// Per-batch buffer holding one gradient per group until all n are present.
class GradientQueue {
 public:
  explicit GradientQueue(int n);

  // Duplicate group -> StateError; shape clash with earlier slots -> ArgumentError.
  void push(int j, GradMap grads);

  bool ready() const { return static_cast<int>(slots_.size()) == n_; }
  std::size_t size() const { return slots_.size(); }

  // Weighted sum in ascending group order, then the queue empties.
  GradMap aggregate(const GroupWeights& weights);

  // L2 norm per held slot, for the conflict-diagnosis dump.
  std::vector<std::pair<int, double>> slot_norms() const;

 private:
  int n_;
  std::map<int, GradMap> slots_;
};

}  // namespace longtail
