#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ucomp/config.hpp"
#include "ucomp/models.hpp"
#include "ucomp/tensor.hpp"
#include "ucomp/trainer.hpp"

namespace ucomp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointRecord {
  std::string name;
  Tensor value;
};

/// Binary layout (little-endian):
///   "C4C1", u32 version, u64 step,
///   u32 length + rng state text, u32 length + config text,
///   u32 count + parameter records,
///   u32 count + optimizer records named <id>/m1, <id>/m2, <id>/t
/// with each record [u16 name length, name, u8 ndim, u32 dims..., f64 data].
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::uint64_t step = 0;
  std::string rng_state;
  std::string config_text;
  std::vector<CheckpointRecord> parameters;
  std::vector<CheckpointRecord> moments;

  TrainConfig config() const { return TrainConfig::from_text(config_text, "checkpoint config"); }
};

Checkpoint capture(const Trainer& trainer);
std::string encode_checkpoint(const Checkpoint& ckpt);
/// Raises IoError on bad magic, unknown version or truncation.
Checkpoint decode_checkpoint(std::string_view bytes, std::string_view origin = "<memory>");

void save_checkpoint(const std::filesystem::path& path, const Trainer& trainer);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies the checkpoint into `trainer`. Everything is validated first, so
/// on error the trainer is left untouched.
void restore_checkpoint(const Checkpoint& ckpt, Trainer& trainer);
void load_checkpoint(const std::filesystem::path& path, Trainer& trainer);

/// Networks of a checkpoint, for inference.
NetworkBundle load_networks(const Checkpoint& ckpt);

}  // namespace ucomp
