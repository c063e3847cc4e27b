#include "longtail/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "longtail/errors.hpp"

namespace longtail {

TiePolicy tie_policy_from_name(const std::string& name) {
  if (name == "strict") return TiePolicy::strict;
  if (name == "half") return TiePolicy::half;
  throw ArgumentError("unknown tie policy: " + name);
}

double auc(std::span<const double> positives, std::span<const double> negatives,
           TiePolicy tie) {
  if (positives.empty() || negatives.empty())
    throw ArgumentError("auc: both classes must be nonempty");
  for (double v : positives)
    if (!std::isfinite(v)) throw ArgumentError("auc: non-finite score");
  for (double v : negatives)
    if (!std::isfinite(v)) throw ArgumentError("auc: non-finite score");

  std::vector<double> neg(negatives.begin(), negatives.end());
  std::sort(neg.begin(), neg.end());

  // integer pair counts so the sorted path agrees with brute force exactly
  std::uint64_t wins2 = 0;  // 2*wins (+1 per tie under `half`)
  for (double p : positives) {
    const auto lo = std::lower_bound(neg.begin(), neg.end(), p);
    const auto hi = std::upper_bound(lo, neg.end(), p);
    wins2 += 2 * static_cast<std::uint64_t>(lo - neg.begin());
    if (tie == TiePolicy::half) wins2 += static_cast<std::uint64_t>(hi - lo);
  }
  const double pairs =
      static_cast<double>(positives.size()) * static_cast<double>(neg.size());
  return static_cast<double>(wins2) / (2.0 * pairs);
}

double hitrate_at_k(const std::map<std::int64_t, int>& ranks, int k) {
  if (ranks.empty()) throw ArgumentError("hitrate_at_k: empty user set");
  if (k < 1) throw ArgumentError("hitrate_at_k: K must be >= 1");
  std::size_t hits = 0;
  for (const auto& [user, rank] : ranks) {
    if (rank < 1) throw ArgumentError("hitrate_at_k: ranks start at 1");
    if (rank <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double ndcg_at_k(const std::map<std::int64_t, int>& ranks, int k) {
  if (ranks.empty()) throw ArgumentError("ndcg_at_k: empty user set");
  if (k < 1) throw ArgumentError("ndcg_at_k: K must be >= 1");
  double sum = 0.0;
  for (const auto& [user, rank] : ranks) {
    if (rank < 1) throw ArgumentError("ndcg_at_k: ranks start at 1");
    // single relevant item, binary gain: ideal DCG is 1
    if (rank <= k) sum += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
  }
  return sum / static_cast<double>(ranks.size());
}

namespace {

struct UserSlice {
  std::vector<double> pos, neg;
  int group = 0;
};

}  // namespace

MetricsReport build_report(const std::vector<Prediction>& predictions,
                           const GroupAssignment& assignment, const std::vector<int>& ks,
                           TiePolicy tie) {
  if (predictions.empty()) throw ArgumentError("build_report: no predictions");

  MetricsReport rep;
  rep.tie = tie;

  std::map<std::int64_t, UserSlice> users;
  for (const auto& p : predictions) {
    UserSlice& s = users[p.user];
    if (p.label == 1.0)
      s.pos.push_back(p.score);
    else
      s.neg.push_back(p.score);
    s.group = p.group != 0 ? p.group : assignment.group_for(p.user, 0);
  }

  const int n = assignment.n;
  std::vector<std::vector<double>> group_pos(n), group_neg(n);
  std::vector<double> group_user_auc_sum(n, 0.0);
  std::vector<std::size_t> group_user_count(n, 0), group_samples(n, 0),
      group_users_all(n, 0);
  std::vector<std::map<std::int64_t, int>> group_ranks(n);

  double user_auc_sum = 0.0;
  std::vector<double> all_pos, all_neg;

  for (const auto& [uid, s] : users) {
    if (s.group < 1 || s.group > n)
      throw ArgumentError("build_report: sample with unknown group");
    const int g = s.group - 1;
    ++group_users_all[g];
    group_samples[g] += s.pos.size() + s.neg.size();
    group_pos[g].insert(group_pos[g].end(), s.pos.begin(), s.pos.end());
    group_neg[g].insert(group_neg[g].end(), s.neg.begin(), s.neg.end());
    all_pos.insert(all_pos.end(), s.pos.begin(), s.pos.end());
    all_neg.insert(all_neg.end(), s.neg.begin(), s.neg.end());

    if (s.pos.empty() || s.neg.empty()) {
      ++rep.users_skipped;
    } else {
      const double a = auc(s.pos, s.neg, tie);
      user_auc_sum += a;
      group_user_auc_sum[g] += a;
      ++group_user_count[g];
      ++rep.users_evaluated;

      // rank = 1 + negatives scored strictly above the (leave-last-out)
      // positive; the first positive stands in if a user somehow has several
      int above = 0;
      for (double v : s.neg)
        if (v > s.pos.front()) ++above;
      group_ranks[g][uid] = above + 1;
    }
  }

  if (rep.users_evaluated == 0)
    throw ArgumentError("build_report: no user has both classes");

  rep.user_level_auc = user_auc_sum / static_cast<double>(rep.users_evaluated);
  rep.pooled_auc = auc(all_pos, all_neg, tie);

  std::map<std::int64_t, int> all_ranks;
  for (int g = 0; g < n; ++g)
    for (const auto& [uid, r] : group_ranks[g]) all_ranks[uid] = r;

  for (int k : ks) {
    rep.hitrate[k] = all_ranks.empty() ? 0.0 : hitrate_at_k(all_ranks, k);
    rep.ndcg[k] = all_ranks.empty() ? 0.0 : ndcg_at_k(all_ranks, k);
  }

  for (int g = 0; g < n; ++g) {
    GroupMetrics gm;
    gm.group = g + 1;
    gm.users = group_users_all[g];
    gm.samples = group_samples[g];
    gm.auc_pooled = (!group_pos[g].empty() && !group_neg[g].empty())
                        ? auc(group_pos[g], group_neg[g], tie)
                        : std::nan("");
    gm.auc_user_mean = group_user_count[g]
                           ? group_user_auc_sum[g] / static_cast<double>(group_user_count[g])
                           : std::nan("");
    for (int k : ks) {
      gm.hitrate[k] = group_ranks[g].empty() ? std::nan("") : hitrate_at_k(group_ranks[g], k);
      gm.ndcg[k] = group_ranks[g].empty() ? std::nan("") : ndcg_at_k(group_ranks[g], k);
    }
    rep.groups.push_back(std::move(gm));
  }
  return rep;
}

std::string report_to_text(const MetricsReport& rep) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "Group level performance\n";
  os << std::setw(8) << "Group" << std::setw(8) << "Users" << std::setw(10) << "Samples"
     << std::setw(10) << "AUC" << std::setw(12) << "AUC(user)";
  for (const auto& [k, v] : rep.groups.empty() ? std::map<int, double>{} : rep.groups[0].hitrate)
    os << std::setw(8) << ("HR@" + std::to_string(k)) << std::setw(10)
       << ("NDCG@" + std::to_string(k));
  os << '\n';
  for (const auto& g : rep.groups) {
    os << std::setw(8) << ("Group " + std::to_string(g.group)) << std::setw(8) << g.users
       << std::setw(10) << g.samples << std::setw(10) << g.auc_pooled << std::setw(12)
       << g.auc_user_mean;
    for (const auto& [k, v] : g.hitrate) os << std::setw(8) << v << std::setw(10) << g.ndcg.at(k);
    os << '\n';
  }
  os << "\nUser level performance (all data)\n";
  os << "  users evaluated: " << rep.users_evaluated << "  skipped: " << rep.users_skipped
     << '\n';
  os << "  AUC (mean per-user): " << rep.user_level_auc << '\n';
  os << "  AUC (pooled):        " << rep.pooled_auc << '\n';
  for (const auto& [k, v] : rep.hitrate)
    os << "  HitRate@" << k << ": " << v << "   NDCG@" << k << ": " << rep.ndcg.at(k) << '\n';
  return os.str();
}

}  // namespace longtail
