#include "longtail/optimizer.hpp"

#include <cmath>

#include "longtail/errors.hpp"

namespace longtail {

void AdamOptimizer::step(const std::vector<ParamTensor*>& params, const GradMap& grads,
                         double lr) {
  if (lr <= 0.0) throw ArgumentError("AdamOptimizer: learning rate must be positive");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

  static const DenseArray kEmpty;
  for (ParamTensor* p : params) {
    const DenseArray* g = &kEmpty;
    if (auto it = grads.find(p->name); it != grads.end()) {
      if (!it->second.same_shape(p->data))
        throw ArgumentError("AdamOptimizer: gradient shape mismatch at " + p->name);
      if (!it->second.all_finite())
        throw NumericError("AdamOptimizer: non-finite gradient at " + p->name);
      g = &it->second;
    }
    auto& m = m_.try_emplace(p->name, DenseArray::zeros(p->data.shape)).first->second;
    auto& v = v_.try_emplace(p->name, DenseArray::zeros(p->data.shape)).first->second;
    if (!m.same_shape(p->data))
      throw ArgumentError("AdamOptimizer: stale state shape at " + p->name);

    const bool has_grad = g->numel() > 0;
    for (std::size_t i = 0; i < p->data.numel(); ++i) {
      const double gi = has_grad ? g->values[i] : 0.0;
      m.values[i] = cfg_.beta1 * m.values[i] + (1.0 - cfg_.beta1) * gi;
      v.values[i] = cfg_.beta2 * v.values[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double m_hat = m.values[i] / bc1;
      const double v_hat = v.values[i] / bc2;
      p->data.values[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }
}

void AdamOptimizer::restore(std::map<std::string, DenseArray> m,
                            std::map<std::string, DenseArray> v, std::int64_t t) {
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
}

}  // namespace longtail
