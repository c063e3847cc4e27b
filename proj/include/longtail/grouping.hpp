#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "longtail/dataio.hpp"

namespace longtail {

enum class ActivenessMode { sample_count, sequence_length };
ActivenessMode activeness_mode_from_name(const std::string& name);
const char* activeness_mode_name(ActivenessMode m);

// Per-user activeness, the confounder the grouping conditions on.
// sample-count counts every record of the user; sequence-length counts the
// clicks (positives) that form the user's history. The two coincide on
// positives-only logs.
struct ActivenessIndex {
  ActivenessMode mode = ActivenessMode::sample_count;
  std::map<std::int64_t, std::int64_t> per_user;
};

ActivenessIndex compute_activeness(const InteractionLog& log, ActivenessMode mode);

// Users ordered by activeness and cut into n contiguous segments of
// near-equal training-sample mass.
struct GroupAssignment {
  int n = 1;
  std::map<std::int64_t, int> group_of;                       // user -> 1..n
  std::vector<std::int64_t> counts;                           // n_j, indexed j-1
  std::int64_t total = 0;                                     // N
  std::vector<std::pair<std::int64_t, std::int64_t>> activeness_range;  // per group

  // Training users resolve to their assignment; unseen users fall back to
  // the group whose activeness range is nearest to the hint.
  int group_for(std::int64_t user, std::int64_t activeness_hint) const;
};

// What the greedy sweep equalizes. `samples` cuts where cumulative sample
// mass is closest to j*N/n, so the Eq.-7 style weights stay near 1.
// `users` cuts into equally-sized user segments; on long-tail data the
// per-group sample counts then differ sharply and the inverse-frequency
// weights carry the correction.
enum class GroupBalance { samples, users };
GroupBalance group_balance_from_name(const std::string& name);

// Sort ascending by (activeness, user id), then sweep cuts per `balance`.
// `samples_per_user` is the training-sample count entering N and n_j; it may
// differ from activeness (e.g. after negative sampling).
GroupAssignment assign_groups(const ActivenessIndex& idx, int n,
                              const std::map<std::int64_t, std::int64_t>& samples_per_user,
                              GroupBalance balance = GroupBalance::samples);

void save_assignment_csv(const GroupAssignment& a, const std::string& path);

// Per-group shuffled sample streams. Every global batch yields exactly one
// mini-batch per group; groups that run out mid-epoch reshuffle and cycle
// until the largest group finishes.
class GroupedSampleStream {
 public:
  GroupedSampleStream(std::vector<int> sample_group /*1..n per sample*/, int n,
                      std::size_t minibatch, std::uint64_t seed);

  std::size_t batches_per_epoch() const { return batches_per_epoch_; }

  // n mini-batches of sample indices, ascending group order.
  std::vector<std::vector<std::size_t>> next_batch();

  void start_epoch();  // reshuffles every group, resets cursors

 private:
  void reshuffle(int g);

  int n_;
  std::size_t minibatch_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::size_t batch_in_epoch_ = 0;
  std::size_t batches_per_epoch_ = 0;
  std::size_t largest_ = 0;
  std::vector<std::vector<std::size_t>> by_group_;  // shuffled sample indices
  std::vector<std::size_t> cursor_;
  std::vector<std::uint64_t> cycle_count_;
};

}  // namespace longtail
