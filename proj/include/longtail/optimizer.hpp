#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "longtail/array.hpp"

namespace longtail {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive-moment optimizer with bias correction. Moments are keyed by
// parameter name and created lazily on the first step.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Missing grad entries count as zero gradient. A non-finite gradient
  // raises NumericError naming the parameter.
  void step(const std::vector<ParamTensor*>& params, const GradMap& grads, double lr);

  std::int64_t steps() const { return t_; }
  const std::map<std::string, DenseArray>& first_moments() const { return m_; }
  const std::map<std::string, DenseArray>& second_moments() const { return v_; }
  void restore(std::map<std::string, DenseArray> m, std::map<std::string, DenseArray> v,
               std::int64_t t);

 private:
  AdamConfig cfg_;
  std::map<std::string, DenseArray> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace longtail
