#include "longtail/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "longtail/rng.hpp"

namespace longtail {

std::vector<std::vector<std::size_t>> InteractionLog::per_user_order() const {
  std::vector<std::vector<std::size_t>> order(num_users());
  for (std::size_t i = 0; i < records.size(); ++i)
    order[records[i].user].push_back(i);
  for (auto& idx : order) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return records[a].timestamp < records[b].timestamp;
    });
  }
  return order;
}

LogFormat log_format_from_name(const std::string& name) {
  if (name == "movielens-dat") return LogFormat::movielens_dat;
  if (name == "csv") return LogFormat::csv;
  throw ArgumentError("unknown log format: " + name);
}

TestNegativeMode test_mode_from_name(const std::string& name) {
  if (name == "all-negatives") return TestNegativeMode::all_negatives;
  if (name == "ratio-1-to-99") return TestNegativeMode::ratio_1_to_99;
  throw ArgumentError("unknown test negative mode: " + name);
}

namespace {

class IdMapper {
 public:
  std::int64_t id_for(const std::string& raw, std::vector<std::string>& names) {
    auto [it, inserted] = index_.try_emplace(raw, static_cast<std::int64_t>(names.size()));
    if (inserted) names.push_back(raw);
    return it->second;
  }

 private:
  std::unordered_map<std::string, std::int64_t> index_;
};

std::vector<std::string> split_fields(const std::string& line, const std::string& delim) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = line.find(delim, pos);
    if (next == std::string::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + delim.size();
  }
  return out;
}

double parse_number(const std::string& s, const char* what, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(std::string("line ") + std::to_string(line_no) + ": bad " + what +
                     " value '" + s + "'");
  }
}

bool looks_numeric(const std::string& s) {
  if (s.empty()) return false;
  char* end = nullptr;
  std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

}  // namespace

InteractionLog load_interactions(const std::string& path, LogFormat format) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open " + path);

  InteractionLog log;
  IdMapper users, items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    if (format == LogFormat::movielens_dat) {
      auto f = split_fields(line, "::");
      if (f.size() != 4)
        throw ParseError("line " + std::to_string(line_no) + ": expected 4 '::' fields");
      Interaction r;
      r.user = users.id_for(f[0], log.user_names);
      r.item = items.id_for(f[1], log.item_names);
      parse_number(f[2], "rating", line_no);  // validated, then treated as a click
      r.timestamp = parse_number(f[3], "timestamp", line_no);
      r.label = 1.0;
      log.records.push_back(r);
    } else {
      auto f = split_fields(line, ",");
      if (f.size() != 3 && f.size() != 4)
        throw ParseError("line " + std::to_string(line_no) + ": expected 3 or 4 ',' fields");
      if (line_no == 1 && !looks_numeric(f[2])) continue;  // header
      Interaction r;
      r.user = users.id_for(f[0], log.user_names);
      r.item = items.id_for(f[1], log.item_names);
      r.timestamp = parse_number(f[2], "timestamp", line_no);
      r.label = f.size() == 4 ? parse_number(f[3], "label", line_no) : 1.0;
      if (r.label != 0.0 && r.label != 1.0)
        throw ParseError("line " + std::to_string(line_no) + ": label must be 0 or 1");
      log.records.push_back(r);
    }
  }
  if (log.records.empty()) throw ArgumentError("empty interaction file: " + path);
  return log;
}

void save_interactions_csv(const InteractionLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write " + path);
  out << "user,item,timestamp,label\n";
  for (const auto& r : log.records) {
    out << log.user_names[r.user] << ',' << log.item_names[r.item] << ',' << r.timestamp
        << ',' << r.label << '\n';
  }
}

Split leave_last_out_split(const InteractionLog& log) {
  if (log.records.empty()) throw ArgumentError("leave_last_out_split: empty log");
  Split split;
  split.train.user_names = log.user_names;
  split.train.item_names = log.item_names;
  split.test.user_names = log.user_names;
  split.test.item_names = log.item_names;

  const auto order = log.per_user_order();
  for (std::size_t u = 0; u < order.size(); ++u) {
    const auto& idx = order[u];
    if (idx.size() < 2) {
      if (!idx.empty()) ++split.dropped_users;
      continue;
    }
    // last positive goes to test; everything else trains
    std::size_t last_pos = idx.size();
    for (std::size_t k = idx.size(); k-- > 0;) {
      if (log.records[idx[k]].label == 1.0) {
        last_pos = k;
        break;
      }
    }
    if (last_pos == idx.size()) {
      ++split.dropped_users;  // no positive at all
      continue;
    }
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (k == last_pos)
        split.test.records.push_back(log.records[idx[k]]);
      else
        split.train.records.push_back(log.records[idx[k]]);
    }
  }
  return split;
}

namespace {

// k distinct indices from [0, n) in deterministic order (Floyd's algorithm).
std::vector<std::size_t> sample_distinct(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> out;
  out.reserve(k);
  std::unordered_set<std::size_t> seen;
  for (std::size_t i = n - k; i < n; ++i) {
    std::size_t j = static_cast<std::size_t>(rng.uniform_int(i + 1));
    if (seen.count(j)) j = i;
    seen.insert(j);
    out.push_back(j);
  }
  return out;
}

}  // namespace

SampledDataset negative_sample(const Split& split, int train_ratio, TestNegativeMode mode,
                               std::uint64_t seed) {
  if (train_ratio < 1) throw ArgumentError("negative_sample: train ratio must be >= 1");

  SampledDataset ds;
  ds.num_users = split.train.num_users();
  ds.num_items = split.train.num_items();

  const std::size_t num_users = ds.num_users;
  const std::size_t num_items = ds.num_items;

  // per-user interacted set across both splits
  std::vector<std::unordered_set<std::int64_t>> interacted(num_users);
  for (const auto& r : split.train.records) interacted[r.user].insert(r.item);
  for (const auto& r : split.test.records) interacted[r.user].insert(r.item);

  const auto train_order = split.train.per_user_order();

  std::vector<std::size_t> test_of_user(num_users, static_cast<std::size_t>(-1));
  for (std::size_t i = 0; i < split.test.records.size(); ++i)
    test_of_user[split.test.records[i].user] = i;

  for (std::size_t u = 0; u < num_users; ++u) {
    if (train_order[u].empty()) continue;
    Rng rng(Rng::derive(seed, u));

    std::vector<std::int64_t> pool;
    pool.reserve(num_items - interacted[u].size());
    for (std::size_t i = 0; i < num_items; ++i)
      if (!interacted[u].count(static_cast<std::int64_t>(i)))
        pool.push_back(static_cast<std::int64_t>(i));

    auto draw_negatives = [&](std::size_t k, double ts, std::size_t anchor,
                              std::vector<Sample>& sink) {
      if (pool.empty()) {
        ds.sampled_with_replacement = true;  // nothing to draw from
        return;
      }
      if (k <= pool.size()) {
        for (std::size_t j : sample_distinct(rng, pool.size(), k))
          sink.push_back(Sample{static_cast<std::int64_t>(u), pool[j], 0.0, ts, anchor});
      } else {
        ds.sampled_with_replacement = true;
        for (std::size_t c = 0; c < k; ++c) {
          const std::size_t j = static_cast<std::size_t>(rng.uniform_int(pool.size()));
          sink.push_back(Sample{static_cast<std::int64_t>(u), pool[j], 0.0, ts, anchor});
        }
      }
    };

    // train: positives in order, each with `train_ratio` negatives
    std::size_t positives_seen = 0;
    for (std::size_t idx : train_order[u]) {
      const Interaction& r = split.train.records[idx];
      if (r.label == 1.0) {
        ds.train.push_back(
            Sample{r.user, r.item, 1.0, r.timestamp, positives_seen});
        draw_negatives(static_cast<std::size_t>(train_ratio), r.timestamp, positives_seen,
                       ds.train);
        ++positives_seen;
      } else {
        ds.train.push_back(Sample{r.user, r.item, 0.0, r.timestamp, positives_seen});
      }
    }

    // test: the held-out positive against sampled or exhaustive negatives
    if (test_of_user[u] != static_cast<std::size_t>(-1)) {
      const Interaction& t = split.test.records[test_of_user[u]];
      ds.test.push_back(Sample{t.user, t.item, 1.0, t.timestamp, positives_seen});
      if (mode == TestNegativeMode::all_negatives) {
        for (std::int64_t item : pool)
          ds.test.push_back(Sample{t.user, item, 0.0, t.timestamp, positives_seen});
      } else {
        draw_negatives(99, t.timestamp, positives_seen, ds.test);
      }
    }
  }
  return ds;
}

void build_sequences(SampledDataset& ds, const InteractionLog& full, std::size_t L) {
  if (L < 1) throw ArgumentError("build_sequences: L must be >= 1");

  // ordered positive item history per user
  std::vector<std::vector<std::int64_t>> history(full.num_users());
  const auto order = full.per_user_order();
  for (std::size_t u = 0; u < order.size(); ++u)
    for (std::size_t idx : order[u])
      if (full.records[idx].label == 1.0) history[u].push_back(full.records[idx].item);

  auto attach = [&](Sample& s) {
    const auto& h = history[s.user];
    const std::size_t end = std::min(s.anchor_pos, h.size());
    const std::size_t begin = end > L ? end - L : 0;
    s.sequence.assign(L, -1);
    // left padding: real items occupy the tail of the window
    std::size_t w = L - (end - begin);
    for (std::size_t k = begin; k < end; ++k) s.sequence[w++] = h[k];
  };

  for (auto& s : ds.train) attach(s);
  for (auto& s : ds.test) attach(s);
  ds.seq_len = L;
}

void save_sampled_csv(const SampledDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write " + path);
  out << "split,user,item,timestamp,label,group,sequence\n";
  auto emit = [&](const char* split_name, const Sample& s) {
    out << split_name << ',' << s.user << ',' << s.item << ',' << s.timestamp << ','
        << s.label << ',' << s.group << ',';
    bool first = true;
    for (std::int64_t id : s.sequence) {
      if (id < 0) continue;
      if (!first) out << '|';
      out << id;
      first = false;
    }
    out << '\n';
  };
  for (const auto& s : ds.train) emit("train", s);
  for (const auto& s : ds.test) emit("test", s);
}

InteractionLog generate_synthetic(const SynthSpec& spec) {
  if (spec.groups < 1) throw ArgumentError("synthetic: groups must be >= 1");
  if (spec.users_per_group.size() != static_cast<std::size_t>(spec.groups) ||
      spec.activeness.size() != static_cast<std::size_t>(spec.groups))
    throw ArgumentError("synthetic: users_per_group/activeness must have one entry per group");
  if (spec.num_items < 2) throw ArgumentError("synthetic: need at least two items");
  if (spec.shared_dim < 0 || spec.group_dim < 0)
    throw ArgumentError("synthetic: negative preference dimension");
  if (spec.candidates_per_event < 2)
    throw ArgumentError("synthetic: candidates_per_event must be >= 2");
  for (int g = 0; g < spec.groups; ++g) {
    const auto [lo, hi] = spec.activeness[g];
    if (lo < 1 || hi < lo)
      throw ArgumentError("synthetic: infeasible activeness range for group " +
                          std::to_string(g + 1));
    if (spec.users_per_group[g] < 1)
      throw ArgumentError("synthetic: users_per_group must be positive");
    if (g > 0) {
      if (spec.activeness[g].first < spec.activeness[g - 1].first ||
          spec.activeness[g].second < spec.activeness[g - 1].second)
        throw ArgumentError("synthetic: activeness ranges must ascend with group index");
      if (spec.users_per_group[g] > spec.users_per_group[g - 1])
        throw ArgumentError("synthetic: user counts must not increase with activeness");
    }
  }

  Rng rng(spec.seed);
  const int ds = spec.shared_dim, dg = spec.group_dim;
  const int dim = ds + dg;

  // item latent features
  std::vector<std::vector<double>> item_feat(spec.num_items, std::vector<double>(dim));
  for (auto& f : item_feat)
    for (double& v : f) v = rng.uniform(-1.0, 1.0);

  // One shared preference plus a per-group direction. The high-activeness
  // groups form a mainstream cluster and the angles fan out quadratically
  // toward the tail, whose taste diverges the most: exactly the split where
  // joint training serves the head and underserves the tail.
  std::vector<double> shared(ds);
  for (double& v : shared) v = rng.uniform(-1.0, 1.0);
  std::vector<std::vector<double>> group_pref(spec.groups, std::vector<double>(dg, 0.0));
  for (int g = 0; g < spec.groups; ++g) {
    const double frac = spec.groups > 1 ? double(g) / double(spec.groups - 1) : 0.0;
    const double away = (1.0 - frac) * (1.0 - frac);  // 1 at the tail, 0 at the head
    if (dg == 1) {
      group_pref[g][0] = 1.0 - 2.0 * away;
    } else if (dg >= 2) {
      const double theta = away * 3.14159265358979323846;
      group_pref[g][0] = std::cos(theta);
      group_pref[g][1] = std::sin(theta);
      for (int k = 2; k < dg; ++k) group_pref[g][k] = rng.uniform(-0.3, 0.3);
    }
  }

  const double s_scale = ds > 0 ? spec.shared_strength / std::sqrt(double(ds)) : 0.0;
  const double g_scale = dg > 0 ? spec.group_strength / std::sqrt(double(dg)) : 0.0;

  InteractionLog log;
  std::int64_t uid = 0;
  for (int g = 0; g < spec.groups; ++g) {
    const auto [lo, hi] = spec.activeness[g];
    for (int uu = 0; uu < spec.users_per_group[g]; ++uu, ++uid) {
      Rng urng(Rng::derive(spec.seed, 0x10000 + static_cast<std::uint64_t>(uid)));
      const int events = lo + static_cast<int>(urng.uniform_int(hi - lo + 1));
      for (int e = 0; e < events; ++e) {
        // preference-weighted choice among a uniform candidate slate
        double best = -1e300;
        std::int64_t pick = 0;
        for (int c = 0; c < spec.candidates_per_event; ++c) {
          const auto i = static_cast<std::int64_t>(urng.uniform_int(spec.num_items));
          double affinity = 0.0;
          for (int k = 0; k < ds; ++k) affinity += s_scale * shared[k] * item_feat[i][k];
          for (int k = 0; k < dg; ++k)
            affinity += g_scale * group_pref[g][k] * item_feat[i][ds + k];
          const double gumbel = -std::log(-std::log(
              std::min(1.0 - 1e-16, std::max(1e-16, urng.uniform()))));
          const double score = affinity + spec.noise * gumbel;
          if (score > best) {
            best = score;
            pick = i;
          }
        }
        log.records.push_back(Interaction{uid, pick, double(e + 1), 1.0});
      }
    }
  }

  log.user_names.reserve(static_cast<std::size_t>(uid));
  for (std::int64_t u = 0; u < uid; ++u) log.user_names.push_back("u" + std::to_string(u));
  log.item_names.reserve(spec.num_items);
  for (int i = 0; i < spec.num_items; ++i) log.item_names.push_back("i" + std::to_string(i));
  return log;
}

InteractionLog subsample_users(const InteractionLog& log, std::size_t keep,
                               std::uint64_t seed) {
  if (keep == 0 || keep > log.num_users())
    throw ArgumentError("subsample_users: keep must be in [1, num_users]");
  if (keep == log.num_users()) return log;

  std::vector<std::size_t> all(log.num_users());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  Rng rng(Rng::derive(seed, 0x5ab5));
  rng.shuffle(all);
  all.resize(keep);
  std::sort(all.begin(), all.end());  // dense ids keep the original order

  std::vector<std::int64_t> remap(log.num_users(), -1);
  InteractionLog out;
  out.item_names = log.item_names;
  for (std::size_t i = 0; i < all.size(); ++i) {
    remap[all[i]] = static_cast<std::int64_t>(i);
    out.user_names.push_back(log.user_names[all[i]]);
  }
  for (const auto& r : log.records) {
    if (remap[r.user] < 0) continue;
    Interaction copy = r;
    copy.user = remap[r.user];
    out.records.push_back(copy);
  }
  if (out.records.empty()) throw ArgumentError("subsample_users: no records left");
  return out;
}

}  // namespace longtail
