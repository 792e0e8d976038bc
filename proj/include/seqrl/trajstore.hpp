#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "seqrl/envs.hpp"
#include "seqrl/policy.hpp"

namespace seqrl {

/// One episode: observations, actions and rewards of equal length.
struct Trajectory {
  std::vector<double> observations;  // T x C x H x W
  std::vector<std::size_t> actions;
  std::vector<double> rewards;

  std::size_t length() const { return actions.size(); }
  double episode_return() const;
  bool operator==(const Trajectory&) const = default;
};

/// DRLT dataset: header fields plus the trajectories.
struct Dataset {
  ObsShape shape;
  std::uint32_t action_count = 0;
  std::string env_tag;
  std::uint32_t frame_skip = 0;
  std::vector<Trajectory> trajectories;

  bool operator==(const Dataset&) const = default;
};

inline constexpr std::uint32_t kDatasetVersion = 1;

/// Little-endian layout: "DRLT", u32 version, u32 C, H, W, u32 actions,
/// u64 count, u32 tag length + tag bytes, u32 frame skip, then per
/// trajectory [u32 T][T*C*H*W f32 obs][T u32 actions][T f32 rewards].
std::vector<std::uint8_t> encode_dataset(const Dataset& dataset);
/// Validates everything; any failure is a FormatError with the byte offset.
Dataset decode_dataset(const std::vector<std::uint8_t>& bytes);

void write_dataset(const Dataset& dataset, const std::string& path);
Dataset read_dataset(const std::string& path);

struct DatasetStats {
  std::size_t count = 0;
  double mean_return = 0.0;
  double min_return = 0.0;
  double max_return = 0.0;
  double mean_length = 0.0;
};

/// Single pass over the trajectories; an empty dataset is a StateError.
DatasetStats dataset_stats(const Dataset& dataset);
DatasetStats dataset_stats(const std::string& path);

/// Plays n episodes of `policy` with frame skip k; episode seeds and the
/// policy's random stream both derive from `seed`.
Dataset collect(Policy& policy, const EnvSettings& settings, std::size_t n_trajectories, std::uint64_t seed,
                std::size_t frame_skip);

}  // namespace seqrl
