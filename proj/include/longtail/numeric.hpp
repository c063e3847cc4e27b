#pragma once

#include <functional>
#include <span>
#include <vector>

#include "longtail/array.hpp"

namespace longtail {

// Numerically stable logistic; never returns exactly 0 or 1.
double sigmoid(double x);
std::vector<double> sigmoid(std::span<const double> x);

// Mean binary cross entropy. Predictions are clamped to
// [kLogClampEps, 1 - kLogClampEps] before the logs.
inline constexpr double kLogClampEps = 1e-12;
double bce_loss(std::span<const double> preds, std::span<const double> labels);

// d(bce)/d(pred_i) for the mean-form loss, with the same clamping.
std::vector<double> bce_loss_grad(std::span<const double> preds,
                                  std::span<const double> labels);

// Central-difference gradient of `loss_fn` with respect to every entry of
// `params`. Perturbs in place and restores; `loss_fn` must be deterministic.
// Used as the correctness oracle for every analytic backward pass.
GradMap finite_diff_grad(const std::function<double()>& loss_fn,
                         const std::vector<ParamTensor*>& params, double eps);

// max over entries of |a-b| / max(1, |a|, |b|); arguments must share keys.
double max_rel_error(const GradMap& a, const GradMap& b);

}  // namespace longtail
