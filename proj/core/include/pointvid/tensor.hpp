#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pointvid {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& dims);
std::size_t shape_numel(const Shape& dims);

/// Dense row-major float tensor with up to five positive extents.
///
/// Every element is finite; construction and `validate()` enforce it.
class TensorF {
 public:
  static constexpr std::size_t kMaxRank = 5;

  TensorF() = default;
  explicit TensorF(Shape dims);  // zero-filled
  TensorF(Shape dims, std::vector<float> data);

  const Shape& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  std::vector<float>& storage() noexcept { return data_; }
  const std::vector<float>& storage() const noexcept { return data_; }

  float& operator[](std::size_t i) noexcept { return data_[i]; }
  float operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Throws ValidationError on any NaN/Inf element.
  void validate_finite() const;

  bool operator==(const TensorF&) const = default;

 private:
  Shape dims_;
  std::vector<float> data_;
};

/// Foreground mask on the reference frame, H x W.
class ForegroundMask {
 public:
  ForegroundMask() = default;
  ForegroundMask(std::size_t height, std::size_t width);
  ForegroundMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> cells);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  bool at(std::size_t row, std::size_t col) const { return cells_[row * width_ + col] != 0; }
  void set(std::size_t row, std::size_t col, bool value) { cells_[row * width_ + col] = value ? 1 : 0; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }

  /// [H, W] tensor of 0/1.
  TensorF to_tensor() const;
  static ForegroundMask from_tensor(const TensorF& t);

  bool operator==(const ForegroundMask&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> cells_;
};

/// [T, H, W, 3] colors in [0, 1].
class RgbVideo {
 public:
  RgbVideo() = default;
  explicit RgbVideo(TensorF tensor);

  const TensorF& tensor() const noexcept { return tensor_; }
  std::size_t frames() const { return tensor_.dim(0); }
  std::size_t height() const { return tensor_.dim(1); }
  std::size_t width() const { return tensor_.dim(2); }

 private:
  TensorF tensor_;
};

/// [T, H, W, 3] pixel-aligned (u, v, d) trajectories, normalized. Background pixels are zero.
class PointGrid {
 public:
  PointGrid() = default;
  explicit PointGrid(TensorF tensor);

  const TensorF& tensor() const noexcept { return tensor_; }
  TensorF& tensor() noexcept { return tensor_; }
  std::size_t frames() const { return tensor_.dim(0); }
  std::size_t height() const { return tensor_.dim(1); }
  std::size_t width() const { return tensor_.dim(2); }

  /// Largest |value| over pixels where the mask is false; 0 for a well-formed grid.
  float max_background_magnitude(const ForegroundMask& mask) const;

 private:
  TensorF tensor_;
};

/// [T, H, W, 6]: channels 0..2 RGB, 3..5 (u, v, d).
class JointVideo {
 public:
  JointVideo() = default;
  explicit JointVideo(TensorF tensor);

  const TensorF& tensor() const noexcept { return tensor_; }
  std::size_t frames() const { return tensor_.dim(0); }
  std::size_t height() const { return tensor_.dim(1); }
  std::size_t width() const { return tensor_.dim(2); }

 private:
  TensorF tensor_;
};

JointVideo concat_vp(const RgbVideo& video, const PointGrid& points);

struct VideoPointPair {
  RgbVideo video;
  PointGrid points;
};
VideoPointPair slice_channels(const JointVideo& joint);

/// Copies channels [begin, end) of a [..., C] tensor.
TensorF slice_last_axis(const TensorF& t, std::size_t begin, std::size_t end);

/// Storage range [0,1] <-> diffusion range [-1,1], x -> 2x - 1.
TensorF to_diffusion_range(const TensorF& storage);
TensorF to_storage_range(const TensorF& diffusion);

}  // namespace pointvid
