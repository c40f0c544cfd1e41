#include "pointvid/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pointvid/error.hpp"

namespace pointvid {

std::string shape_string(const Shape& dims) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out << ',';
    out << dims[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_numel(const Shape& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

namespace {

void check_dims(const Shape& dims) {
  if (dims.empty() || dims.size() > TensorF::kMaxRank) {
    throw ShapeError("tensor rank must be in [1, 5], got " + std::to_string(dims.size()));
  }
  for (auto d : dims) {
    if (d == 0) throw ShapeError("tensor extents must be positive: " + shape_string(dims));
  }
}

}  // namespace

TensorF::TensorF(Shape dims) : dims_(std::move(dims)) {
  check_dims(dims_);
  data_.assign(shape_numel(dims_), 0.0f);
}

TensorF::TensorF(Shape dims, std::vector<float> data) : dims_(std::move(dims)), data_(std::move(data)) {
  check_dims(dims_);
  if (shape_numel(dims_) != data_.size()) {
    throw ShapeError("tensor " + shape_string(dims_) + " needs " + std::to_string(shape_numel(dims_)) +
                     " elements, got " + std::to_string(data_.size()));
  }
  validate_finite();
}

void TensorF::validate_finite() const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw ValidationError("non-finite tensor element at flat index " + std::to_string(i));
    }
  }
}

ForegroundMask::ForegroundMask(std::size_t height, std::size_t width)
    : height_(height), width_(width), cells_(height * width, 0) {}

ForegroundMask::ForegroundMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> cells)
    : height_(height), width_(width), cells_(std::move(cells)) {
  if (cells_.size() != height_ * width_) throw ShapeError("mask cell count does not match H x W");
}

std::size_t ForegroundMask::count() const {
  return static_cast<std::size_t>(std::count_if(cells_.begin(), cells_.end(), [](auto c) { return c != 0; }));
}

TensorF ForegroundMask::to_tensor() const {
  TensorF t({height_, width_});
  for (std::size_t i = 0; i < cells_.size(); ++i) t[i] = cells_[i] ? 1.0f : 0.0f;
  return t;
}

ForegroundMask ForegroundMask::from_tensor(const TensorF& t) {
  if (t.rank() != 2) throw ShapeError("mask tensor must be [H,W], got " + shape_string(t.dims()));
  ForegroundMask m(t.dim(0), t.dim(1));
  for (std::size_t i = 0; i < t.size(); ++i) m.cells_[i] = t[i] != 0.0f ? 1 : 0;
  return m;
}

namespace {

void check_video_dims(const TensorF& t, std::size_t channels, const char* what) {
  if (t.rank() != 4 || t.dim(3) != channels) {
    throw ShapeError(std::string(what) + " must be [T,H,W," + std::to_string(channels) + "], got " +
                     shape_string(t.dims()));
  }
}

}  // namespace

RgbVideo::RgbVideo(TensorF tensor) : tensor_(std::move(tensor)) {
  check_video_dims(tensor_, 3, "RgbVideo");
  for (float x : tensor_.data()) {
    if (!(x >= 0.0f && x <= 1.0f)) throw ValidationError("RgbVideo values must lie in [0,1]");
  }
}

PointGrid::PointGrid(TensorF tensor) : tensor_(std::move(tensor)) { check_video_dims(tensor_, 3, "PointGrid"); }

float PointGrid::max_background_magnitude(const ForegroundMask& mask) const {
  if (mask.height() != height() || mask.width() != width()) {
    throw ShapeError("mask " + std::to_string(mask.height()) + "x" + std::to_string(mask.width()) +
                     " does not match point grid " + shape_string(tensor_.dims()));
  }
  float worst = 0.0f;
  const std::size_t hw = height() * width();
  for (std::size_t t = 0; t < frames(); ++t) {
    for (std::size_t px = 0; px < hw; ++px) {
      if (mask.at(px / width(), px % width())) continue;
      for (std::size_t c = 0; c < 3; ++c) worst = std::max(worst, std::abs(tensor_[(t * hw + px) * 3 + c]));
    }
  }
  return worst;
}

JointVideo::JointVideo(TensorF tensor) : tensor_(std::move(tensor)) { check_video_dims(tensor_, 6, "JointVideo"); }

JointVideo concat_vp(const RgbVideo& video, const PointGrid& points) {
  const auto& a = video.tensor().dims();
  const auto& b = points.tensor().dims();
  if (a[0] != b[0] || a[1] != b[1] || a[2] != b[2]) {
    throw ShapeError("cannot concatenate video " + shape_string(a) + " with points " + shape_string(b));
  }
  const std::size_t pixels = a[0] * a[1] * a[2];
  std::vector<float> out(pixels * 6);
  const auto v = video.tensor().data();
  const auto p = points.tensor().data();
  for (std::size_t i = 0; i < pixels; ++i) {
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(i * 3), 3, out.begin() + static_cast<std::ptrdiff_t>(i * 6));
    std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(i * 3), 3,
                out.begin() + static_cast<std::ptrdiff_t>(i * 6 + 3));
  }
  return JointVideo(TensorF({a[0], a[1], a[2], 6}, std::move(out)));
}

TensorF slice_last_axis(const TensorF& t, std::size_t begin, std::size_t end) {
  const std::size_t c = t.dims().back();
  if (begin >= end || end > c) throw ShapeError("bad channel slice of " + shape_string(t.dims()));
  Shape dims = t.dims();
  dims.back() = end - begin;
  const std::size_t rows = t.size() / c;
  const std::size_t w = end - begin;
  std::vector<float> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < w; ++k) out[r * w + k] = t[r * c + begin + k];
  }
  return TensorF(std::move(dims), std::move(out));
}

VideoPointPair slice_channels(const JointVideo& joint) {
  return {RgbVideo(slice_last_axis(joint.tensor(), 0, 3)), PointGrid(slice_last_axis(joint.tensor(), 3, 6))};
}

TensorF to_diffusion_range(const TensorF& storage) {
  TensorF out = storage;
  for (auto& x : out.storage()) x = 2.0f * x - 1.0f;
  return out;
}

TensorF to_storage_range(const TensorF& diffusion) {
  TensorF out = diffusion;
  for (auto& x : out.storage()) x = 0.5f * (x + 1.0f);
  return out;
}

}  // namespace pointvid
