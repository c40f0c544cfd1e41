#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "pointvid/denoiser.hpp"
#include "pointvid/train.hpp"

namespace pointvid {

inline constexpr const char* kCheckpointFormat = "pointvid-checkpoint-1";

/// Directory layout:
///   layout.json  format tag, model config, parameter layout, optimizer config and step count,
///                iteration, resolved training config and loss weights, video dims
///   params.vpt   flat [P] parameter vector
///   adam_m.vpt   optimizer first moment (or SGD velocity), [P]
///   adam_v.vpt   Adam second moment, [P]; absent for SGD
struct Checkpoint {
  TrainState state;
  TrainConfig config;
  VideoDims dims;  // training resolution, frames x height x width
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);

/// Throws InputError for missing files and LayoutError when the stored layout does not match the
/// stored config (or `expected`, when given); the message prints both descriptors.
Checkpoint load_checkpoint(const std::filesystem::path& dir, const std::optional<DenoiserConfig>& expected = {});

}  // namespace pointvid
