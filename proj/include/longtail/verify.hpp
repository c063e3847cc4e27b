#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace longtail {

struct VerifyResult {
  std::string suite;
  bool passed = false;
  std::string detail;
};

// Analytic gradients vs central finite differences for every backbone.
VerifyResult verify_gradients(int instances_per_arch = 20, std::uint64_t seed = 0xA11CE);

// Queue aggregation vs an independently coded weighted sum, plus the exact
// n=1 and equal-mass identities.
VerifyResult verify_aggregation(int queues = 100, std::uint64_t seed = 0xB0B);

// Identity-at-zero and per-group isolation for both plugin variants.
VerifyResult verify_plugins(std::uint64_t seed = 0xCAFE);

// Sorted AUC vs quadratic pair counting, tie policies, hit/ndcg hand values.
VerifyResult verify_metrics(std::size_t max_side = 1000, std::uint64_t seed = 0xD1CE);

// name in {gradients, aggregation, plugins, metrics, all}
std::vector<VerifyResult> run_verify(const std::string& name);

}  // namespace longtail
