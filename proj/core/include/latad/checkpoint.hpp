#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "latad/preprocessing.hpp"
#include "latad/scoring.hpp"
#include "latad/training.hpp"

namespace latad {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to score new data with a trained model.
struct Checkpoint {
  /// Serialized experiment configuration and its SHA-256.
  std::string config_text;
  std::string config_hash;
  LatadModel model;
  std::optional<ReferenceModel> reference;
  std::optional<NormalizationStats> stats;
  /// Free-form string metadata, e.g. which modules were disabled.
  std::map<std::string, std::string> metadata;
};

/// Little-endian binary format; doubles are stored bit-exactly.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace latad
