#include "longtail/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "longtail/errors.hpp"

namespace longtail {

double sigmoid(double x) {
  double s;
  if (x >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    s = e / (1.0 + e);
  }
  // Keep the open-interval contract even where exp() saturates.
  const double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  const double lo = std::numeric_limits<double>::min();
  return std::min(hi, std::max(lo, s));
}

std::vector<double> sigmoid(std::span<const double> x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
  return out;
}

static double clamp_pred(double p) {
  return std::min(1.0 - kLogClampEps, std::max(kLogClampEps, p));
}

double bce_loss(std::span<const double> preds, std::span<const double> labels) {
  if (preds.size() != labels.size())
    throw ArgumentError("bce_loss: preds/labels length mismatch");
  if (preds.empty()) throw ArgumentError("bce_loss: empty batch");
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double p = clamp_pred(preds[i]);
    const double y = labels[i];
    sum += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
  }
  return sum / static_cast<double>(preds.size());
}

std::vector<double> bce_loss_grad(std::span<const double> preds,
                                  std::span<const double> labels) {
  if (preds.size() != labels.size())
    throw ArgumentError("bce_loss_grad: preds/labels length mismatch");
  if (preds.empty()) throw ArgumentError("bce_loss_grad: empty batch");
  const double inv_n = 1.0 / static_cast<double>(preds.size());
  std::vector<double> g(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double p = clamp_pred(preds[i]);
    const double y = labels[i];
    g[i] = inv_n * (-(y / p) + (1.0 - y) / (1.0 - p));
  }
  return g;
}

GradMap finite_diff_grad(const std::function<double()>& loss_fn,
                         const std::vector<ParamTensor*>& params, double eps) {
  if (eps <= 0.0) throw ArgumentError("finite_diff_grad: eps must be positive");
  GradMap out;
  for (ParamTensor* p : params) {
    DenseArray g = DenseArray::zeros(p->data.shape);
    for (std::size_t i = 0; i < p->data.numel(); ++i) {
      const double saved = p->data.values[i];
      p->data.values[i] = saved + eps;
      const double f_plus = loss_fn();
      p->data.values[i] = saved - eps;
      const double f_minus = loss_fn();
      p->data.values[i] = saved;
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
        throw NumericError("finite_diff_grad: non-finite loss at " + p->name);
      g.values[i] = (f_plus - f_minus) / (2.0 * eps);
    }
    out.emplace(p->name, std::move(g));
  }
  return out;
}

double max_rel_error(const GradMap& a, const GradMap& b) {
  if (a.size() != b.size()) throw ArgumentError("max_rel_error: key sets differ");
  double worst = 0.0;
  for (const auto& [name, ga] : a) {
    auto it = b.find(name);
    if (it == b.end()) throw ArgumentError("max_rel_error: missing key " + name);
    const DenseArray& gb = it->second;
    if (!ga.same_shape(gb)) throw ArgumentError("max_rel_error: shape mismatch at " + name);
    for (std::size_t i = 0; i < ga.numel(); ++i) {
      const double x = ga.values[i], y = gb.values[i];
      const double denom = std::max({1.0, std::fabs(x), std::fabs(y)});
      worst = std::max(worst, std::fabs(x - y) / denom);
    }
  }
  return worst;
}

}  // namespace longtail
