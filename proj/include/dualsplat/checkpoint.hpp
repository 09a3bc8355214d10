// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dualsplat/optimizer.hpp"
#include "dualsplat/types.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace dualsplat {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Complete resumable training state.
///
/// File layout (all integers and doubles little-endian):
///
///     magic        8 bytes  "DSCKPT\0\0"
///     version      u32
///     payload_len  u64
///     payload      payload_len bytes
///     checksum     u64      FNV-1a 64 of payload
///
/// Payload: iteration i64, the cloud arrays (each as u64 length + elements:
/// positions, log_scales, rotations, opacity_logits, colors, depths,
/// densify_r_max, densify_grad_accum, densify_count as i64, conflict_ema),
/// predictor weights, optimizer step i64, Adam m/v per attribute in
/// position/scale/rotation/opacity/color order, predictor m/v, rng seed u64,
/// rng counter u64.
struct Checkpoint {
    std::uint32_t format_version = kCheckpointVersion;
    std::int64_t iteration = 0;
    GaussianCloud cloud;
    std::vector<double> predictor_weights;
    OptimizerState optimizer_state;
    std::uint64_t rng_seed = 0;
    std::uint64_t rng_counter = 0;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

class CheckpointError : public std::runtime_error {
public:
    enum class Kind { Io, Version, Corrupt };
    CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dualsplat
