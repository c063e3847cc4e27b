#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "longtail/errors.hpp"

namespace longtail {

struct Interaction {
  std::int64_t user = 0;
  std::int64_t item = 0;
  double timestamp = 0.0;
  double label = 1.0;
};

// Timestamped events plus the raw-id vocabularies. Ids are dense indices in
// first-appearance order; per-user ordering is (timestamp, record index).
struct InteractionLog {
  std::vector<Interaction> records;
  std::vector<std::string> user_names;
  std::vector<std::string> item_names;

  std::size_t num_users() const { return user_names.size(); }
  std::size_t num_items() const { return item_names.size(); }

  // record indices per user, sorted by (timestamp, record index)
  std::vector<std::vector<std::size_t>> per_user_order() const;
};

enum class LogFormat { movielens_dat, csv };
LogFormat log_format_from_name(const std::string& name);

// movielens-dat: "user::item::rating::timestamp", every rating a positive.
// csv: "user,item,timestamp[,label]", optional header line.
InteractionLog load_interactions(const std::string& path, LogFormat format);

void save_interactions_csv(const InteractionLog& log, const std::string& path);

struct Split {
  InteractionLog train;
  InteractionLog test;  // one final-timestamp positive per retained user
  std::size_t dropped_users = 0;
};

// Chronological leave-last-out: per user the final positive goes to test.
// Users with fewer than two interactions are dropped and counted.
Split leave_last_out_split(const InteractionLog& log);

enum class TestNegativeMode { all_negatives, ratio_1_to_99 };
TestNegativeMode test_mode_from_name(const std::string& name);

struct Sample {
  std::int64_t user = 0;
  std::int64_t item = 0;
  double label = 1.0;
  double timestamp = 0.0;
  // position of the anchoring positive in the user's ordered click history;
  // the click sequence is the window of positives strictly before it
  std::size_t anchor_pos = 0;
  int group = 0;  // 1..n once assigned
  std::vector<std::int64_t> sequence;  // left-padded with -1 once built
};

struct SampledDataset {
  std::vector<Sample> train;
  std::vector<Sample> test;
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t seq_len = 0;          // 0 until build_sequences ran
  bool sampled_with_replacement = false;  // flagged when a pool ran short
};

// Train: `train_ratio` negatives per positive, drawn without replacement
// from the items the user never interacted with. Test: all remaining items
// or 99 per positive. Seeded per user, deterministic.
SampledDataset negative_sample(const Split& split, int train_ratio, TestNegativeMode mode,
                               std::uint64_t seed);

// Attach click sequences: up to L most recent positives strictly before each
// sample's anchor, left-padded with -1. `full` must contain the user's
// complete positive history (train + test).
void build_sequences(SampledDataset& ds, const InteractionLog& full, std::size_t L);

void save_sampled_csv(const SampledDataset& ds, const std::string& path);

// Synthetic long-tail generator: few very active users, many barely active
// ones, per-group sample mass roughly even. Every user shares one global
// preference vector and adds a group-specific one, so groups agree on the
// shared item axes and disagree on the group axes.
struct SynthSpec {
  int groups = 5;
  // tail group first, non-increasing user counts with ascending activeness
  std::vector<int> users_per_group = {600, 300, 140, 60, 30};
  std::vector<std::pair<int, int>> activeness = {
      {3, 6}, {7, 11}, {14, 22}, {30, 50}, {70, 120}};
  int num_items = 200;
  int shared_dim = 8;
  int group_dim = 2;
  double shared_strength = 1.0;
  double group_strength = 4.0;
  double noise = 0.6;              // Gumbel noise on item choice
  int candidates_per_event = 20;   // items considered per click
  std::uint64_t seed = 1;
};

InteractionLog generate_synthetic(const SynthSpec& spec);

// Keeps a seeded uniform subset of users (item vocabulary unchanged), for
// reduced-scale runs on large logs.
InteractionLog subsample_users(const InteractionLog& log, std::size_t keep,
                               std::uint64_t seed);

}  // namespace longtail
