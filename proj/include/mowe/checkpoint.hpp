// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "mowe/config.hpp"
#include "mowe/model.hpp"

namespace mowe {

/// Reconstructed from a checkpoint: the run config, the input length the
/// model was built for, and the model itself.
struct LoadedCheckpoint {
    RunConfig config;
    std::size_t seq_len = 0;
    MoweModel model;
};

/// Binary layout (little-endian):
///   "MOWECKPT" | u32 version | u32 metadata length | metadata JSON
///   | u32 tensor count | per tensor: u32 name length, name, u32 rank,
///   u64 dims[rank], f64 data[numel]
void save_checkpoint(const std::filesystem::path& path, const MoweModel& model, const RunConfig& cfg);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Overwrites every named tensor of `model` with the one in `path`; shapes
/// and names must match exactly.
void restore_parameters(const std::filesystem::path& path, MoweModel& model);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace mowe
