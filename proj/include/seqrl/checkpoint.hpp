#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seqrl/params.hpp"

namespace seqrl {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Little-endian layout: "DRLC", u32 version, u64 entry count, then per
/// entry [u32 name length][name][u32 rank][rank x u64 dims][f64 data].
std::vector<std::uint8_t> encode_checkpoint(const ParameterStore& params);
/// Restores a store in file order. Leaves require gradients iff
/// `requires_grad`.
ParameterStore decode_checkpoint(const std::vector<std::uint8_t>& bytes, bool requires_grad = false);

void write_checkpoint(const ParameterStore& params, const std::string& path);
ParameterStore read_checkpoint(const std::string& path, bool requires_grad = false);

}  // namespace seqrl
