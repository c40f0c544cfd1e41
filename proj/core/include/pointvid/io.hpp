#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "pointvid/tensor.hpp"

namespace pointvid {

// .vpt container: "VPT1", u32 ndim, ndim x u32 extents, raw f32 payload. All little-endian.
std::vector<std::byte> encode_tensor(const TensorF& t);
TensorF decode_tensor(std::span<const std::byte> bytes);

void write_tensor(const TensorF& t, const std::filesystem::path& path);
TensorF read_tensor(const std::filesystem::path& path);

/// One binary P6 file per frame, frame_000.ppm, frame_001.ppm, ... Values become round(255 x).
void write_ppm_frames(const RgbVideo& video, const std::filesystem::path& dir);
void write_ppm(const TensorF& frame, const std::filesystem::path& path);  // [H,W,3] in [0,1]
TensorF read_ppm(const std::filesystem::path& path);                     // [H,W,3] in [0,1]

struct PlyPoint {
  std::array<double, 3> xyz{};
  std::optional<std::array<std::uint8_t, 3>> rgb;
};

/// ASCII PLY. Either every point carries a color or none does.
void write_ply(std::span<const PlyPoint> points, const std::filesystem::path& path);

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::vector<std::byte> read_file(const std::filesystem::path& path);

}  // namespace pointvid
