#pragma once

#include <filesystem>
#include <optional>

#include "cmguard/defense_config.hpp"
#include "cmguard/dqn.hpp"
#include "cmguard/features.hpp"
#include "cmguard/gnn.hpp"

namespace cmguard {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  GnnParams params;
  NormStats norm;
  TrainConfig train;
  std::optional<DefenseConfig> defense;
};

/// Writes JSON; doubles round-trip exactly.
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
/// Throws DataError on malformed content, a version mismatch, or parameter
/// blocks that disagree with the dims header.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cmguard
