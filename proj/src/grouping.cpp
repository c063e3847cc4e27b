#include "longtail/grouping.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "longtail/errors.hpp"
#include "longtail/rng.hpp"

namespace longtail {

ActivenessMode activeness_mode_from_name(const std::string& name) {
  if (name == "sample-count") return ActivenessMode::sample_count;
  if (name == "sequence-length") return ActivenessMode::sequence_length;
  throw ArgumentError("unknown activeness mode: " + name);
}

const char* activeness_mode_name(ActivenessMode m) {
  return m == ActivenessMode::sample_count ? "sample-count" : "sequence-length";
}

ActivenessIndex compute_activeness(const InteractionLog& log, ActivenessMode mode) {
  if (log.records.empty()) throw ArgumentError("compute_activeness: empty log");
  ActivenessIndex idx;
  idx.mode = mode;
  for (const auto& r : log.records) {
    if (mode == ActivenessMode::sample_count || r.label == 1.0) idx.per_user[r.user] += 1;
    else idx.per_user.try_emplace(r.user, 0);
  }
  return idx;
}

GroupBalance group_balance_from_name(const std::string& name) {
  if (name == "samples") return GroupBalance::samples;
  if (name == "users") return GroupBalance::users;
  throw ArgumentError("unknown group balance mode: " + name);
}

GroupAssignment assign_groups(const ActivenessIndex& idx, int n,
                              const std::map<std::int64_t, std::int64_t>& samples_per_user,
                              GroupBalance balance) {
  const std::size_t num_users = idx.per_user.size();
  if (n < 1 || static_cast<std::size_t>(n) > num_users)
    throw ArgumentError("assign_groups: need 1 <= n <= number of users");

  // ascending (activeness, user id); map iteration already orders ties by id
  std::vector<std::pair<std::int64_t, std::int64_t>> order;  // (activeness, user)
  order.reserve(num_users);
  for (const auto& [user, act] : idx.per_user) order.emplace_back(act, user);
  std::stable_sort(order.begin(), order.end());

  std::vector<std::int64_t> prefix(num_users + 1, 0);
  for (std::size_t i = 0; i < num_users; ++i) {
    auto it = samples_per_user.find(order[i].second);
    const std::int64_t c = it == samples_per_user.end() ? 0 : it->second;
    if (c < 0) throw ArgumentError("assign_groups: negative sample count");
    prefix[i + 1] = prefix[i] + c;
  }
  const std::int64_t total = prefix[num_users];
  if (total <= 0) throw ArgumentError("assign_groups: no samples");

  // cut j lands where the cumulative mass (or user count) is closest to the
  // j-th even share, keeping at least one user per group; ties take the
  // earlier cut
  std::vector<std::size_t> cuts(n + 1, 0);
  cuts[n] = num_users;
  std::size_t lo = 1;
  for (int j = 1; j < n; ++j) {
    const std::size_t hi = num_users - (n - j);  // leave one user per later group
    std::size_t best = lo;
    if (balance == GroupBalance::users) {
      const std::size_t even = num_users * static_cast<std::size_t>(j) / static_cast<std::size_t>(n);
      best = std::min(hi, std::max(lo, even));
    } else {
      const double target = static_cast<double>(total) * j / n;
      double best_err = std::numeric_limits<double>::infinity();
      for (std::size_t c = lo; c <= hi; ++c) {
        const double err = std::fabs(static_cast<double>(prefix[c]) - target);
        if (err < best_err) {
          best_err = err;
          best = c;
        }
      }
    }
    cuts[j] = best;
    lo = best + 1;
  }

  GroupAssignment a;
  a.n = n;
  a.total = total;
  a.counts.assign(n, 0);
  a.activeness_range.assign(n, {0, 0});
  for (int j = 0; j < n; ++j) {
    a.counts[j] = prefix[cuts[j + 1]] - prefix[cuts[j]];
    a.activeness_range[j] = {order[cuts[j]].first, order[cuts[j + 1] - 1].first};
    for (std::size_t i = cuts[j]; i < cuts[j + 1]; ++i)
      a.group_of[order[i].second] = j + 1;
  }
  return a;
}

int GroupAssignment::group_for(std::int64_t user, std::int64_t activeness_hint) const {
  auto it = group_of.find(user);
  if (it != group_of.end()) return it->second;
  // nearest group by activeness interval distance; ties to the lower group
  int best = 1;
  std::int64_t best_dist = std::numeric_limits<std::int64_t>::max();
  for (int j = 0; j < n; ++j) {
    const auto [lo, hi] = activeness_range[j];
    std::int64_t d = 0;
    if (activeness_hint < lo) d = lo - activeness_hint;
    else if (activeness_hint > hi) d = activeness_hint - hi;
    if (d < best_dist) {
      best_dist = d;
      best = j + 1;
    }
  }
  return best;
}

void save_assignment_csv(const GroupAssignment& a, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write " + path);
  out << "user,group\n";
  for (const auto& [user, g] : a.group_of) out << user << ',' << g << '\n';
}

GroupedSampleStream::GroupedSampleStream(std::vector<int> sample_group, int n,
                                         std::size_t minibatch, std::uint64_t seed)
    : n_(n), minibatch_(minibatch), seed_(seed) {
  if (n < 1) throw ArgumentError("GroupedSampleStream: n must be >= 1");
  if (minibatch < 1) throw ArgumentError("GroupedSampleStream: minibatch must be >= 1");
  by_group_.assign(n, {});
  for (std::size_t i = 0; i < sample_group.size(); ++i) {
    const int g = sample_group[i];
    if (g < 1 || g > n)
      throw ArgumentError("GroupedSampleStream: sample outside assignment");
    by_group_[g - 1].push_back(i);
  }
  for (const auto& v : by_group_) {
    if (v.empty()) throw ArgumentError("GroupedSampleStream: empty group");
    largest_ = std::max(largest_, v.size());
  }
  batches_per_epoch_ = (largest_ + minibatch_ - 1) / minibatch_;
  start_epoch();
}

void GroupedSampleStream::reshuffle(int g) {
  Rng rng(Rng::derive(seed_, (epoch_ << 20) ^ (cycle_count_[g] << 8) ^ static_cast<std::uint64_t>(g)));
  rng.shuffle(by_group_[g]);
  ++cycle_count_[g];
  cursor_[g] = 0;
}

void GroupedSampleStream::start_epoch() {
  ++epoch_;
  batch_in_epoch_ = 0;
  cursor_.assign(n_, 0);
  cycle_count_.assign(n_, 0);
  for (int g = 0; g < n_; ++g) reshuffle(g);
}

std::vector<std::vector<std::size_t>> GroupedSampleStream::next_batch() {
  if (batch_in_epoch_ >= batches_per_epoch_) start_epoch();
  std::vector<std::vector<std::size_t>> out(n_);
  for (int g = 0; g < n_; ++g) {
    auto& mb = out[g];
    // groups holding the epoch's largest stream run out exactly at epoch end
    // (possibly with a short final mini-batch); the others cycle
    std::size_t want = minibatch_;
    if (by_group_[g].size() == largest_)
      want = std::min(want, by_group_[g].size() - cursor_[g]);
    mb.reserve(want);
    for (std::size_t k = 0; k < want; ++k) {
      if (cursor_[g] >= by_group_[g].size()) reshuffle(g);
      mb.push_back(by_group_[g][cursor_[g]++]);
    }
  }
  ++batch_in_epoch_;
  return out;
}

}  // namespace longtail
