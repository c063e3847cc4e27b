#include <doctest.h>

#include <cmath>

#include "longtail/errors.hpp"
#include "longtail/optimizer.hpp"

using namespace longtail;

namespace {

ParamTensor scalar_param(double v) {
  ParamTensor p{"w", DenseArray::zeros({1}), Section::extractor};
  p.data.values[0] = v;
  return p;
}

GradMap scalar_grad(double g) {
  GradMap m;
  DenseArray a = DenseArray::zeros({1});
  a.values[0] = g;
  m.emplace("w", std::move(a));
  return m;
}

}  // namespace

TEST_SUITE_BEGIN("optimizer");

TEST_CASE("zero gradient leaves parameters unchanged") {
  ParamTensor p = scalar_param(1.5);
  AdamOptimizer opt;
  opt.step({&p}, scalar_grad(0.0), 0.01);
  CHECK(p.data.values[0] == 1.5);
  opt.step({&p}, GradMap{}, 0.01);  // missing entry counts as zero
  CHECK(p.data.values[0] == 1.5);
}

TEST_CASE("first step with unit gradient moves by about lr") {
  ParamTensor p = scalar_param(0.0);
  AdamOptimizer opt;
  opt.step({&p}, scalar_grad(1.0), 0.001);
  CHECK(p.data.values[0] == doctest::Approx(-0.001).epsilon(1e-6));
}

TEST_CASE("constant gradient settles near lr per step") {
  ParamTensor p = scalar_param(0.0);
  AdamOptimizer opt;
  double prev = 0.0;
  double last_step = 0.0;
  for (int t = 0; t < 200; ++t) {
    opt.step({&p}, scalar_grad(0.5), 0.01);
    last_step = prev - p.data.values[0];
    prev = p.data.values[0];
  }
  CHECK(last_step == doctest::Approx(0.01).epsilon(1e-3));
}

TEST_CASE("descends a quadratic") {
  ParamTensor p = scalar_param(3.0);
  AdamOptimizer opt;
  for (int t = 0; t < 3000; ++t) {
    const double g = 2.0 * p.data.values[0];  // d/dx x^2
    opt.step({&p}, scalar_grad(g), 0.01);
  }
  CHECK(std::fabs(p.data.values[0]) < 0.05);
}

TEST_CASE("non-finite gradients name the parameter") {
  ParamTensor p = scalar_param(0.0);
  AdamOptimizer opt;
  try {
    opt.step({&p}, scalar_grad(std::nan("")), 0.01);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("w") != std::string::npos);
  }
}

TEST_CASE("shape mismatch and bad lr are rejected") {
  ParamTensor p = scalar_param(0.0);
  AdamOptimizer opt;
  GradMap bad;
  bad.emplace("w", DenseArray::zeros({2}));
  CHECK_THROWS_AS(opt.step({&p}, bad, 0.01), ArgumentError);
  CHECK_THROWS_AS(opt.step({&p}, scalar_grad(1.0), 0.0), ArgumentError);
}

TEST_CASE("runs are deterministic") {
  ParamTensor p1 = scalar_param(1.0), p2 = scalar_param(1.0);
  AdamOptimizer o1, o2;
  for (int t = 0; t < 50; ++t) {
    const double g = std::sin(t * 0.1);
    o1.step({&p1}, scalar_grad(g), 0.005);
    o2.step({&p2}, scalar_grad(g), 0.005);
  }
  CHECK(p1.data.values[0] == p2.data.values[0]);
}

TEST_SUITE_END();
