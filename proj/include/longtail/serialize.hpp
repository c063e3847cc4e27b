#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "longtail/model.hpp"
#include "longtail/optimizer.hpp"
#include "longtail/plugin.hpp"

namespace longtail {

// Versioned binary checkpoint: trunk, optional plugin set, optional
// optimizer moments, the resolved config echo and the seed. Doubles are
// stored raw, so reload is bit-exact.
struct Checkpoint {
  TrunkParams trunk;
  std::optional<PluginSet> plugins;
  std::map<std::string, DenseArray> trunk_m, trunk_v;
  std::int64_t trunk_steps = 0;
  std::string config_json;
  std::uint64_t seed = 0;
};

void save_checkpoint(const std::string& path, const TrunkParams& trunk,
                     const PluginSet* plugins, const AdamOptimizer* trunk_opt,
                     const std::string& config_json, std::uint64_t seed);

Checkpoint load_checkpoint(const std::string& path);

// FNV-1a over a buffer or file, hex-encoded; used for provenance manifests.
std::string fnv1a_hex(const std::string& bytes);
std::string file_hash_hex(const std::string& path);

}  // namespace longtail
