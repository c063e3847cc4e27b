#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "longtail/grouping.hpp"

namespace longtail {

enum class TiePolicy { strict, half };
TiePolicy tie_policy_from_name(const std::string& name);

// Pairwise AUC: fraction of (positive, negative) pairs ranked correctly.
// strict counts ties as wrong (the literal indicator form); half credits
// ties 0.5. Sort-based, but exactly equal to quadratic pair counting.
double auc(std::span<const double> positives, std::span<const double> negatives,
           TiePolicy tie = TiePolicy::strict);

// ranks: user -> 1-based rank of the ground-truth item.
double hitrate_at_k(const std::map<std::int64_t, int>& ranks, int k);
double ndcg_at_k(const std::map<std::int64_t, int>& ranks, int k);

struct Prediction {
  std::int64_t user = 0;
  double score = 0.0;
  double label = 0.0;
  int group = 0;  // 1..n
};

struct GroupMetrics {
  int group = 0;
  std::size_t users = 0;
  std::size_t samples = 0;
  double auc_pooled = 0.0;     // one ScoredSet per group (headline)
  double auc_user_mean = 0.0;  // per-user AUC averaged within the group
  std::map<int, double> hitrate;  // by K
  std::map<int, double> ndcg;
};

struct MetricsReport {
  std::vector<GroupMetrics> groups;
  double pooled_auc = 0.0;      // all samples together
  double user_level_auc = 0.0;  // mean per-user AUC, the user-level headline
  std::map<int, double> hitrate;
  std::map<int, double> ndcg;
  std::size_t users_evaluated = 0;
  std::size_t users_skipped = 0;  // lacked a positive or a negative

  std::string dataset, model, config_hash;
  std::uint64_t seed = 0;
  TiePolicy tie = TiePolicy::strict;
};

// Group level pools every sample of a group; user level averages per-user
// AUC, skipping users that lack one of the classes. Ranks for HitRate/NDCG
// count negatives scored strictly above the positive.
MetricsReport build_report(const std::vector<Prediction>& predictions,
                           const GroupAssignment& assignment, const std::vector<int>& ks,
                           TiePolicy tie = TiePolicy::strict);

// Aligned-column rendering of the group and user tables.
std::string report_to_text(const MetricsReport& report);

}  // namespace longtail
