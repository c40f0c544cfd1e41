#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <nlohmann/json_fwd.hpp>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pointvid {

/// Toy per-frame convolutional epsilon-predictor.
///
/// Each half of the input (RGB, and for the joint model the point channels) is paired with the
/// conditioning frame and two pixel-coordinate channels, embedded by a 3x3 convolution, optionally
/// linked by two passes of channel cross-attention, summed, shifted by a timestep/frame embedding,
/// and refined by `depth` residual 3x3 blocks before a 3x3 output projection per half.
struct DenoiserConfig {
  int in_channels = 3;  // 3 (RGB stage) or 6 (joint)
  int hidden_channels = 16;
  int depth = 3;
  int time_embed_dim = 16;  // sinusoid width for the timestep, and again for the frame index
  int cond_channels = 3;
  bool use_cross_attention = false;
  int attention_heads = 1;
  int attention_dim = 8;

  void validate() const;
  int halves() const { return in_channels / 3; }
  int half_input_channels() const { return 3 + cond_channels + 2; }

  bool operator==(const DenoiserConfig&) const = default;
};

nlohmann::json config_to_json(const DenoiserConfig& cfg);
DenoiserConfig config_from_json(const nlohmann::json& j);

struct LayerSpec {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const LayerSpec&) const = default;
};

/// Per-layer offsets into the flat parameter vector; the layers partition it exactly.
struct ParamLayout {
  std::vector<LayerSpec> layers;
  std::size_t total = 0;

  const LayerSpec& find(const std::string& name) const;
  bool contains(const std::string& name) const;
  bool operator==(const ParamLayout&) const = default;
};

ParamLayout make_layout(const DenoiserConfig& cfg);
nlohmann::json layout_to_json(const ParamLayout& layout);
ParamLayout layout_from_json(const nlohmann::json& j);

struct DenoiserParams {
  ParamLayout layout;
  std::vector<float> values;

  std::span<const float> layer(const std::string& name) const;
  std::span<float> layer(const std::string& name);
};

/// Random initialization (seeded). Attention output projections start at zero.
DenoiserParams init_params(const DenoiserConfig& cfg, std::uint64_t seed);
DenoiserParams zero_params(const DenoiserConfig& cfg);

struct VideoDims {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t pixels() const { return frames * height * width; }
};

template <typename Real>
struct DenoiserPassImpl;

/// One forward evaluation of the denoiser, optionally keeping activations for `backward`.
///
/// `Real` selects the arithmetic: float for training, double for gradient checks. Parameters
/// are always stored as float.
template <typename Real>
class DenoiserPass {
 public:
  /// z_t: [T,H,W,in_channels], cond: [H,W,cond_channels], both in diffusion range.
  DenoiserPass(const DenoiserConfig& cfg, const DenoiserParams& params, const VideoDims& dims,
               std::span<const Real> z_t, std::span<const Real> cond, int t, bool keep_activations);
  ~DenoiserPass();
  DenoiserPass(DenoiserPass&&) noexcept;
  DenoiserPass& operator=(DenoiserPass&&) noexcept;

  /// eps_hat, [T,H,W,in_channels].
  std::span<const Real> output() const;

  /// Gradient of sum(d_out * output) with respect to every parameter, in layout order.
  std::vector<Real> backward(std::span<const Real> d_out) const;

 private:
  std::unique_ptr<DenoiserPassImpl<Real>> impl_;
};

/// A configuration together with its parameters.
struct DenoiserModel {
  DenoiserConfig cfg;
  DenoiserParams params;
};

/// Convenience float forward without activations.
std::vector<float> denoise_forward(const DenoiserConfig& cfg, const DenoiserParams& params, const VideoDims& dims,
                                   std::span<const float> z_t, std::span<const float> cond, int t);

/// Two-pass channel cross-attention on [T,H,W,C] feature halves. Per frame, the spatial tokens
/// of `v` query those of `p` and the result is added to `v`; then `p` queries the updated `v`.
template <typename Real>
std::pair<std::vector<Real>, std::vector<Real>> cross_attention_block(const DenoiserConfig& cfg,
                                                                      const DenoiserParams& params,
                                                                      const VideoDims& dims,
                                                                      std::span<const Real> v_feat,
                                                                      std::span<const Real> p_feat);

/// Widens a 3-channel model to 6 channels: old weights are copied, new ones are zero except
/// the attention query/key/value projections, which get a seeded random init so the block can
/// learn (their output projections are zero, so the model's function is unchanged).
std::pair<DenoiserConfig, DenoiserParams> augment_channels(const DenoiserConfig& rgb_cfg,
                                                           const DenoiserParams& rgb_params,
                                                           bool use_cross_attention = true,
                                                           std::uint64_t seed = 0);

}  // namespace pointvid
