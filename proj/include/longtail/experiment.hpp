#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "longtail/dataio.hpp"
#include "longtail/grouping.hpp"
#include "longtail/metrics.hpp"
#include "longtail/model.hpp"
#include "longtail/trainer.hpp"

namespace longtail {

using Json = nlohmann::ordered_json;

// Everything one run needs: dataset source, preprocessing, grouping, model,
// training and metric settings. Round-trips losslessly through JSON.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "out";

  // dataset
  std::string dataset_kind = "synthetic";  // synthetic | file
  std::string dataset_name = "synthetic";
  std::string dataset_path;
  std::string dataset_format = "csv";      // csv | movielens-dat
  std::size_t max_users = 0;               // 0 = keep all
  SynthSpec synth;

  // preprocessing
  int train_negatives = 4;
  std::string test_mode = "ratio-1-to-99";  // or all-negatives
  std::size_t max_seq_len = 50;

  // grouping
  std::string grouping_mode = "sequence-length";
  std::string grouping_balance = "samples";
  int groups = 5;

  // model
  std::string arch = "avg-pool";
  std::size_t embedding_dim = 16;
  std::size_t hidden_dim = 32;
  std::size_t attention_dim = 16;
  std::size_t extractor_layers = 1;

  // training
  TrainConfig train;
  bool run_stage2 = true;
  bool dump_grad_norms = false;

  // metrics
  std::vector<int> ks = {1, 5, 10};
  std::string tie_policy = "strict";

  void validate() const;
};

ExperimentConfig config_from_json(const Json& j);
Json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::string& path);

// The pipeline up to (but not including) training.
struct PreparedData {
  InteractionLog log;        // post-subsampling source log
  SampledDataset data;       // sequences built, groups stamped
  ActivenessIndex activeness;
  GroupAssignment assignment;
  std::size_t dropped_users = 0;
};

PreparedData prepare_data(const ExperimentConfig& cfg);

// Scores the test split, routing each sample through its group's plugin
// when a plugin set is supplied.
std::vector<Prediction> score_test_set(const TrunkParams& trunk, const PluginSet* plugins,
                                       const SampledDataset& data,
                                       const GroupAssignment& assignment);

struct ExperimentResult {
  ExperimentConfig resolved;
  MetricsReport report;
  std::vector<EpochStats> curve;
  std::map<std::string, std::string> file_hashes;  // relative path -> fnv hex
  std::string report_json;                          // exact bytes written
};

// ingest -> group -> stage I -> stage II -> evaluate, with all artifacts
// (reports, curves, checkpoints, manifest) under cfg.output_dir.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

Json report_to_json(const MetricsReport& report, const ExperimentConfig& cfg);

}  // namespace longtail
