#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reina/model.hpp"

namespace reina {

struct ProvenanceEntry {
  int stage = 0;
  std::uint64_t seed = 0;
  int steps = 0;
  std::string note;  // e.g. the policy loss kind for stage 3
};

struct Checkpoint {
  ModelParams params;
  int stage = 0;  // 0 = freshly initialized
  std::uint64_t seed = 0;
  std::vector<ProvenanceEntry> provenance;
  nlohmann::ordered_json train_config = nlohmann::ordered_json::object();
  nlohmann::ordered_json rng_state = nlohmann::ordered_json::object();
  nlohmann::ordered_json counters = nlohmann::ordered_json::object();
  nlohmann::ordered_json log = nlohmann::ordered_json::array();
};

inline constexpr int kCheckpointVersion = 1;

Checkpoint fresh_checkpoint(const ArchConfig& arch, std::uint64_t seed);

nlohmann::ordered_json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::ordered_json& j);

// Doubles are written in shortest round-trip form, so save -> load -> save is
// byte-identical. Load failures raise LoadError.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace reina
