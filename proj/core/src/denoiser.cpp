#include "pointvid/denoiser.hpp"

#include <Eigen/Core>
#include <cmath>
#include <nlohmann/json.hpp>
#include <random>

#include "pointvid/error.hpp"

namespace pointvid {

void DenoiserConfig::validate() const {
  if (in_channels != 3 && in_channels != 6) throw ParameterError("in_channels must be 3 or 6");
  if (hidden_channels < 1 || depth < 0 || time_embed_dim < 2 || time_embed_dim % 2 != 0 || cond_channels < 1) {
    throw ParameterError("denoiser extents must be positive (time_embed_dim even)");
  }
  if (use_cross_attention) {
    if (in_channels != 6) throw ParameterError("cross-attention needs the 6-channel joint model");
    if (attention_heads < 1 || attention_dim < 1 || attention_dim % attention_heads != 0) {
      throw ParameterError("attention_dim must be a positive multiple of attention_heads");
    }
  }
}

nlohmann::json config_to_json(const DenoiserConfig& c) {
  return {{"in_channels", c.in_channels},         {"hidden_channels", c.hidden_channels},
          {"depth", c.depth},                     {"time_embed_dim", c.time_embed_dim},
          {"cond_channels", c.cond_channels},     {"use_cross_attention", c.use_cross_attention},
          {"attention_heads", c.attention_heads}, {"attention_dim", c.attention_dim}};
}

DenoiserConfig config_from_json(const nlohmann::json& j) {
  DenoiserConfig c;
  c.in_channels = j.value("in_channels", c.in_channels);
  c.hidden_channels = j.value("hidden_channels", c.hidden_channels);
  c.depth = j.value("depth", c.depth);
  c.time_embed_dim = j.value("time_embed_dim", c.time_embed_dim);
  c.cond_channels = j.value("cond_channels", c.cond_channels);
  c.use_cross_attention = j.value("use_cross_attention", c.use_cross_attention);
  c.attention_heads = j.value("attention_heads", c.attention_heads);
  c.attention_dim = j.value("attention_dim", c.attention_dim);
  c.validate();
  return c;
}

const LayerSpec& ParamLayout::find(const std::string& name) const {
  for (const auto& l : layers) {
    if (l.name == name) return l;
  }
  throw LayoutError("parameter layout has no layer '" + name + "'");
}

bool ParamLayout::contains(const std::string& name) const {
  for (const auto& l : layers) {
    if (l.name == name) return true;
  }
  return false;
}

ParamLayout make_layout(const DenoiserConfig& cfg) {
  cfg.validate();
  ParamLayout layout;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    layout.layers.push_back({std::move(name), rows, cols, layout.total});
    layout.total += rows * cols;
  };
  const auto c = static_cast<std::size_t>(cfg.hidden_channels);
  const auto e = static_cast<std::size_t>(cfg.time_embed_dim);
  const auto in_half = static_cast<std::size_t>(9 * cfg.half_input_channels());
  const bool joint = cfg.in_channels == 6;

  add("time.w1", 2 * e, c);
  add("time.b1", 1, c);
  add("time.w2", c, c);
  add("time.b2", 1, c);
  add("embed.vv", in_half, c);
  add("embed.v.bias", 1, c);
  if (joint) {
    add("embed.vp", in_half, c);
    add("embed.pv", in_half, c);
    add("embed.pp", in_half, c);
    add("embed.p.bias", 1, c);
  }
  if (cfg.use_cross_attention) {
    const auto a = static_cast<std::size_t>(cfg.attention_dim);
    for (const char* pass : {"attn1", "attn2"}) {
      const std::string p(pass);
      add(p + ".q", c, a);
      add(p + ".k", c, a);
      add(p + ".v", c, a);
      add(p + ".out", a, c);
    }
  }
  for (int i = 0; i < cfg.depth; ++i) {
    add("block" + std::to_string(i) + ".w", 9 * c, c);
    add("block" + std::to_string(i) + ".b", 1, c);
  }
  add("out.rgb.w", 9 * c, 3);
  add("out.rgb.b", 1, 3);
  if (joint) {
    add("out.pts.w", 9 * c, 3);
    add("out.pts.b", 1, 3);
  }
  return layout;
}

nlohmann::json layout_to_json(const ParamLayout& layout) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : layout.layers) {
    layers.push_back({{"name", l.name}, {"rows", l.rows}, {"cols", l.cols}, {"offset", l.offset}});
  }
  return {{"total", layout.total}, {"layers", std::move(layers)}};
}

ParamLayout layout_from_json(const nlohmann::json& j) {
  ParamLayout layout;
  layout.total = j.at("total").get<std::size_t>();
  std::size_t expect = 0;
  for (const auto& jl : j.at("layers")) {
    LayerSpec l{jl.at("name").get<std::string>(), jl.at("rows").get<std::size_t>(), jl.at("cols").get<std::size_t>(),
                jl.at("offset").get<std::size_t>()};
    if (l.offset != expect) throw LayoutError("layout offsets do not partition the parameter vector");
    expect += l.size();
    layout.layers.push_back(std::move(l));
  }
  if (expect != layout.total) throw LayoutError("layout sizes do not sum to the declared total");
  return layout;
}

std::span<const float> DenoiserParams::layer(const std::string& name) const {
  const auto& l = layout.find(name);
  return std::span<const float>(values).subspan(l.offset, l.size());
}

std::span<float> DenoiserParams::layer(const std::string& name) {
  const auto& l = layout.find(name);
  return std::span<float>(values).subspan(l.offset, l.size());
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_bias(const std::string& name) { return ends_with(name, ".b") || ends_with(name, "bias") || name == "time.b1"; }

bool is_attention_qkv(const std::string& name) {
  return name.rfind("attn", 0) == 0 && !ends_with(name, ".out");
}

void fill_gaussian(std::span<float> values, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, stddev);
  for (auto& x : values) x = static_cast<float>(gauss(rng));
}

}  // namespace

DenoiserParams zero_params(const DenoiserConfig& cfg) {
  DenoiserParams p;
  p.layout = make_layout(cfg);
  p.values.assign(p.layout.total, 0.0f);
  return p;
}

DenoiserParams init_params(const DenoiserConfig& cfg, std::uint64_t seed) {
  DenoiserParams p = zero_params(cfg);
  std::mt19937_64 rng(seed);
  for (const auto& l : p.layout.layers) {
    if (is_bias(l.name) || ends_with(l.name, ".out")) continue;
    double gain = 1.0;
    if (l.name.rfind("block", 0) == 0) gain = 0.5 / std::sqrt(std::max(1, cfg.depth));
    if (l.name.rfind("out.", 0) == 0) gain = 0.5;
    fill_gaussian(std::span<float>(p.values).subspan(l.offset, l.size()), gain / std::sqrt(static_cast<double>(l.rows)),
                  rng);
  }
  return p;
}

std::pair<DenoiserConfig, DenoiserParams> augment_channels(const DenoiserConfig& rgb_cfg,
                                                           const DenoiserParams& rgb_params, bool use_cross_attention,
                                                           std::uint64_t seed) {
  if (rgb_cfg.in_channels != 3) throw LayoutError("channel augmentation expects a 3-channel model");
  if (!(rgb_params.layout == make_layout(rgb_cfg)) || rgb_params.values.size() != rgb_params.layout.total) {
    throw LayoutError("RGB parameters do not match the RGB model layout");
  }
  DenoiserConfig cfg = rgb_cfg;
  cfg.in_channels = 6;
  cfg.use_cross_attention = use_cross_attention;
  DenoiserParams out = zero_params(cfg);
  for (const auto& l : rgb_params.layout.layers) {
    const auto& target = out.layout.find(l.name);
    if (target.rows != l.rows || target.cols != l.cols) throw LayoutError("layer '" + l.name + "' changed shape");
    std::copy_n(rgb_params.values.begin() + static_cast<std::ptrdiff_t>(l.offset), l.size(),
                out.values.begin() + static_cast<std::ptrdiff_t>(target.offset));
  }
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (const auto& l : out.layout.layers) {
    if (is_attention_qkv(l.name)) {
      fill_gaussian(std::span<float>(out.values).subspan(l.offset, l.size()), 1.0 / std::sqrt(static_cast<double>(l.rows)),
                    rng);
    }
  }
  return {cfg, out};
}

// ---------------------------------------------------------------------------------------------
// Network arithmetic

namespace {

template <typename Real>
using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using ConstMatMap = Eigen::Map<const Mat<Real>>;
template <typename Real>
using MatMap = Eigen::Map<Mat<Real>>;
using Index = Eigen::Index;
// Eigen peels vectorized reductions at the first aligned address, so buffers that get mapped
// need a fixed base alignment or the summation order (and the bits) vary between runs.
template <typename Real>
using AlignedVec = std::vector<Real, Eigen::aligned_allocator<Real>>;

template <typename Real>
Mat<Real> im2col(const Mat<Real>& x, const VideoDims& d) {
  const Index c = x.cols();
  const auto h = static_cast<Index>(d.height);
  const auto w = static_cast<Index>(d.width);
  Mat<Real> cols = Mat<Real>::Zero(x.rows(), 9 * c);
  for (Index f = 0; f < static_cast<Index>(d.frames); ++f) {
    for (Index r = 0; r < h; ++r) {
      for (Index col = 0; col < w; ++col) {
        const Index row = (f * h + r) * w + col;
        for (Index ky = 0; ky < 3; ++ky) {
          const Index rr = r + ky - 1;
          if (rr < 0 || rr >= h) continue;
          for (Index kx = 0; kx < 3; ++kx) {
            const Index cc = col + kx - 1;
            if (cc < 0 || cc >= w) continue;
            cols.row(row).segment((ky * 3 + kx) * c, c) = x.row((f * h + rr) * w + cc);
          }
        }
      }
    }
  }
  return cols;
}

template <typename Real>
Mat<Real> col2im(const Mat<Real>& dcols, const VideoDims& d, Index c) {
  const auto h = static_cast<Index>(d.height);
  const auto w = static_cast<Index>(d.width);
  Mat<Real> dx = Mat<Real>::Zero(dcols.rows(), c);
  for (Index f = 0; f < static_cast<Index>(d.frames); ++f) {
    for (Index r = 0; r < h; ++r) {
      for (Index col = 0; col < w; ++col) {
        const Index row = (f * h + r) * w + col;
        for (Index ky = 0; ky < 3; ++ky) {
          const Index rr = r + ky - 1;
          if (rr < 0 || rr >= h) continue;
          for (Index kx = 0; kx < 3; ++kx) {
            const Index cc = col + kx - 1;
            if (cc < 0 || cc >= w) continue;
            dx.row((f * h + rr) * w + cc) += dcols.row(row).segment((ky * 3 + kx) * c, c);
          }
        }
      }
    }
  }
  return dx;
}

template <typename Real>
Mat<Real> silu(const Mat<Real>& x) {
  return (x.array() / (Real(1) + (-x.array()).exp())).matrix();
}

template <typename Real>
Mat<Real> silu_grad(const Mat<Real>& x) {
  const auto sig = (Real(1) / (Real(1) + (-x.array()).exp())).eval();
  return (sig * (Real(1) + x.array() * (Real(1) - sig))).matrix();
}

template <typename Real>
std::vector<Real> sinusoid(double value, int dim) {
  const int half = dim / 2;
  std::vector<Real> out(static_cast<std::size_t>(dim));
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
    out[static_cast<std::size_t>(k)] = static_cast<Real>(std::sin(value * freq));
    out[static_cast<std::size_t>(k + half)] = static_cast<Real>(std::cos(value * freq));
  }
  return out;
}

template <typename Real>
struct AttentionWeights {
  ConstMatMap<Real> q, k, v, out;
};

template <typename Real>
struct AttentionCache {
  Mat<Real> q, k, v, o;
};

template <typename Real>
using TokenRow = Eigen::Array<Real, 1, Eigen::Dynamic>;

// One head of one frame, keys and values stored transposed (dh x tokens) so every inner loop runs
// over contiguous token rows. `s` receives the softmax row of query qi.
template <typename Real, typename QRow>
void softmax_row(const QRow& qi, const Mat<Real>& kt, Real scale, TokenRow<Real>& s) {
  s = (qi(0) * scale) * kt.row(0).array();
  for (Index c = 1; c < kt.rows(); ++c) s += (qi(c) * scale) * kt.row(c).array();
  const Real m = s.maxCoeff();
  s = (s - m).exp();
  s /= s.sum();
}

// Returns x + attention(query = x, key/value = y) per frame. Probabilities are formed one query
// row at a time and never stored; backward recomputes them.
template <typename Real>
Mat<Real> attention_forward(const Mat<Real>& x, const Mat<Real>& y, const AttentionWeights<Real>& w,
                            const VideoDims& d, int heads, AttentionCache<Real>* cache) {
  const Index tokens = static_cast<Index>(d.height * d.width);
  const Index a = w.q.cols();
  const Index dh = a / heads;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));
  Mat<Real> q = x * w.q;
  Mat<Real> k = y * w.k;
  Mat<Real> v = y * w.v;
  Mat<Real> o(x.rows(), a);
  Mat<Real> kt, vt;
  TokenRow<Real> s;
  for (Index f = 0; f < static_cast<Index>(d.frames); ++f) {
    for (Index hd = 0; hd < heads; ++hd) {
      kt = k.block(f * tokens, hd * dh, tokens, dh).transpose();
      vt = v.block(f * tokens, hd * dh, tokens, dh).transpose();
      for (Index i = 0; i < tokens; ++i) {
        const Index row = f * tokens + i;
        softmax_row<Real>(q.row(row).segment(hd * dh, dh), kt, scale, s);
        for (Index c = 0; c < dh; ++c) o(row, hd * dh + c) = (s * vt.row(c).array()).sum();
      }
    }
  }
  Mat<Real> out = x;
  out.noalias() += o * w.out;
  if (cache) {
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->o = std::move(o);
  }
  return out;
}

template <typename Real>
struct AttentionGrads {
  MatMap<Real> q, k, v, out;
};

// Accumulates into dx (including the residual path), dy and the weight gradients.
template <typename Real>
void attention_backward(const Mat<Real>& x, const Mat<Real>& y, const AttentionWeights<Real>& w,
                        const AttentionCache<Real>& cache, const Mat<Real>& d_out, const VideoDims& d, int heads,
                        Mat<Real>& dx, Mat<Real>& dy, AttentionGrads<Real>& g) {
  const Index tokens = static_cast<Index>(d.height * d.width);
  const Index a = w.q.cols();
  const Index dh = a / heads;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));
  dx += d_out;
  g.out.noalias() += cache.o.transpose() * d_out;
  const Mat<Real> d_o = d_out * w.out.transpose();
  Mat<Real> dq(x.rows(), a);
  Mat<Real> dk(y.rows(), a);
  Mat<Real> dv(y.rows(), a);
  Mat<Real> kt, vt, dkt, dvt;
  TokenRow<Real> p, dp;
  for (Index f = 0; f < static_cast<Index>(d.frames); ++f) {
    for (Index hd = 0; hd < heads; ++hd) {
      kt = cache.k.block(f * tokens, hd * dh, tokens, dh).transpose();
      vt = cache.v.block(f * tokens, hd * dh, tokens, dh).transpose();
      dkt = Mat<Real>::Zero(dh, tokens);
      dvt = Mat<Real>::Zero(dh, tokens);
      for (Index i = 0; i < tokens; ++i) {
        const Index row = f * tokens + i;
        const auto qi = cache.q.row(row).segment(hd * dh, dh);
        const auto doi = d_o.row(row).segment(hd * dh, dh);
        softmax_row<Real>(qi, kt, scale, p);
        dp = doi(0) * vt.row(0).array();
        dvt.row(0).array() += doi(0) * p;
        for (Index c = 1; c < dh; ++c) {
          dp += doi(c) * vt.row(c).array();
          dvt.row(c).array() += doi(c) * p;
        }
        const Real inner = (p * dp).sum();
        dp = p * (dp - inner);  // now dS
        for (Index c = 0; c < dh; ++c) {
          dq(row, hd * dh + c) = (dp * kt.row(c).array()).sum() * scale;
          dkt.row(c).array() += (qi(c) * scale) * dp;
        }
      }
      dk.block(f * tokens, hd * dh, tokens, dh) = dkt.transpose();
      dv.block(f * tokens, hd * dh, tokens, dh) = dvt.transpose();
    }
  }
  g.q.noalias() += x.transpose() * dq;
  dx.noalias() += dq * w.q.transpose();
  g.k.noalias() += y.transpose() * dk;
  dy.noalias() += dk * w.k.transpose();
  g.v.noalias() += y.transpose() * dv;
  dy.noalias() += dv * w.v.transpose();
}

}  // namespace

template <typename Real>
struct DenoiserPassImpl {
  DenoiserConfig cfg;
  ParamLayout layout;
  AlignedVec<Real> p;
  VideoDims dims;
  bool keep = false;

  Mat<Real> cols_v, cols_p;
  Mat<Real> v, pf, v1;
  AttentionCache<Real> att1, att2;
  Mat<Real> emb, pre1, hid;
  std::vector<Mat<Real>> h;     // h[i] feeds block i; h[depth] feeds the output layer
  std::vector<Mat<Real>> cols;  // im2col(silu(h[i]))
  AlignedVec<Real> out;

  ConstMatMap<Real> w(const std::string& name) const {
    const auto& l = layout.find(name);
    return ConstMatMap<Real>(p.data() + l.offset, static_cast<Index>(l.rows), static_cast<Index>(l.cols));
  }

  static MatMap<Real> gw(AlignedVec<Real>& g, const ParamLayout& layout, const std::string& name) {
    const auto& l = layout.find(name);
    return MatMap<Real>(g.data() + l.offset, static_cast<Index>(l.rows), static_cast<Index>(l.cols));
  }

  AttentionWeights<Real> attention(const std::string& pass) const {
    return {w(pass + ".q"), w(pass + ".k"), w(pass + ".v"), w(pass + ".out")};
  }

  void forward(std::span<const Real> z_t, std::span<const Real> cond, int t);
  std::vector<Real> backward(std::span<const Real> d_out) const;
};

template <typename Real>
void DenoiserPassImpl<Real>::forward(std::span<const Real> z_t, std::span<const Real> cond, int t) {
  const bool joint = cfg.in_channels == 6;
  const Index pixels = static_cast<Index>(dims.pixels());
  const Index hw = static_cast<Index>(dims.height * dims.width);
  const Index cin = cfg.in_channels;
  const Index cc = cfg.cond_channels;
  const Index ih = cfg.half_input_channels();
  const Index hidden = cfg.hidden_channels;

  auto half_input = [&](Index half) {
    Mat<Real> x(pixels, ih);
    for (Index px = 0; px < pixels; ++px) {
      const Index in_frame = px % hw;
      const Index r = in_frame / static_cast<Index>(dims.width);
      const Index c = in_frame % static_cast<Index>(dims.width);
      for (Index k = 0; k < 3; ++k) x(px, k) = z_t[static_cast<std::size_t>(px * cin + half * 3 + k)];
      for (Index k = 0; k < cc; ++k) x(px, 3 + k) = cond[static_cast<std::size_t>(in_frame * cc + k)];
      x(px, 3 + cc) = dims.width > 1 ? Real(2) * static_cast<Real>(c) / static_cast<Real>(dims.width - 1) - Real(1)
                                     : Real(0);
      x(px, 4 + cc) = dims.height > 1
                          ? Real(2) * static_cast<Real>(r) / static_cast<Real>(dims.height - 1) - Real(1)
                          : Real(0);
    }
    return x;
  };

  cols_v = im2col<Real>(half_input(0), dims);
  v.noalias() = cols_v * w("embed.vv");
  if (joint) {
    cols_p = im2col<Real>(half_input(1), dims);
    v.noalias() += cols_p * w("embed.vp");
  }
  v.rowwise() += w("embed.v.bias").row(0);

  Mat<Real> merged;
  if (joint) {
    pf.noalias() = cols_v * w("embed.pv");
    pf.noalias() += cols_p * w("embed.pp");
    pf.rowwise() += w("embed.p.bias").row(0);
    if (cfg.use_cross_attention) {
      v1 = attention_forward<Real>(v, pf, attention("attn1"), dims, cfg.attention_heads, keep ? &att1 : nullptr);
      const Mat<Real> p2 =
          attention_forward<Real>(pf, v1, attention("attn2"), dims, cfg.attention_heads, keep ? &att2 : nullptr);
      merged = v1 + p2;
    } else {
      merged = v + pf;
    }
  } else {
    merged = v;
  }

  const Index frames = static_cast<Index>(dims.frames);
  const Index e = cfg.time_embed_dim;
  emb.resize(frames, 2 * e);
  const auto t_emb = sinusoid<Real>(static_cast<double>(t), cfg.time_embed_dim);
  for (Index f = 0; f < frames; ++f) {
    const auto f_emb = sinusoid<Real>(static_cast<double>(f), cfg.time_embed_dim);
    for (Index k = 0; k < e; ++k) {
      emb(f, k) = t_emb[static_cast<std::size_t>(k)];
      emb(f, e + k) = f_emb[static_cast<std::size_t>(k)];
    }
  }
  pre1.noalias() = emb * w("time.w1");
  pre1.rowwise() += w("time.b1").row(0);
  hid = silu<Real>(pre1);
  Mat<Real> temb = hid * w("time.w2");
  temb.rowwise() += w("time.b2").row(0);
  for (Index f = 0; f < frames; ++f) merged.middleRows(f * hw, hw).rowwise() += temb.row(f);

  h.assign(static_cast<std::size_t>(cfg.depth) + 1, Mat<Real>());
  cols.assign(static_cast<std::size_t>(cfg.depth) + 1, Mat<Real>());
  h[0] = std::move(merged);
  for (int i = 0; i < cfg.depth; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    cols[ui] = im2col<Real>(silu<Real>(h[ui]), dims);
    h[ui + 1] = h[ui];
    h[ui + 1].noalias() += cols[ui] * w("block" + std::to_string(i) + ".w");
    h[ui + 1].rowwise() += w("block" + std::to_string(i) + ".b").row(0);
  }
  const auto last = static_cast<std::size_t>(cfg.depth);
  cols[last] = im2col<Real>(silu<Real>(h[last]), dims);
  Mat<Real> out_rgb = cols[last] * w("out.rgb.w");
  out_rgb.rowwise() += w("out.rgb.b").row(0);
  out.assign(static_cast<std::size_t>(pixels * cin), Real(0));
  MatMap<Real> out_map(out.data(), pixels, cin);
  out_map.leftCols(3) = out_rgb;
  if (joint) {
    Mat<Real> out_pts = cols[last] * w("out.pts.w");
    out_pts.rowwise() += w("out.pts.b").row(0);
    out_map.rightCols(3) = out_pts;
  }
  (void)hidden;

  if (!keep) {
    cols_v = {};
    cols_p = {};
    v = {};
    pf = {};
    v1 = {};
    h.clear();
    cols.clear();
  }
}

template <typename Real>
std::vector<Real> DenoiserPassImpl<Real>::backward(std::span<const Real> d_out_flat) const {
  if (!keep) throw Error("backward() needs a pass constructed with keep_activations = true");
  const bool joint = cfg.in_channels == 6;
  const Index pixels = static_cast<Index>(dims.pixels());
  const Index hw = static_cast<Index>(dims.height * dims.width);
  const Index cin = cfg.in_channels;
  const Index hidden = cfg.hidden_channels;
  if (d_out_flat.size() != static_cast<std::size_t>(pixels * cin)) throw ShapeError("gradient does not match output");

  AlignedVec<Real> g(layout.total, Real(0));
  const ConstMatMap<Real> d_out(d_out_flat.data(), pixels, cin);
  const Mat<Real> d_rgb = d_out.leftCols(3);
  const auto last = static_cast<std::size_t>(cfg.depth);

  gw(g, layout, "out.rgb.w").noalias() = cols[last].transpose() * d_rgb;
  gw(g, layout, "out.rgb.b") = d_rgb.colwise().sum();
  Mat<Real> dcols = d_rgb * w("out.rgb.w").transpose();
  if (joint) {
    const Mat<Real> d_pts = d_out.rightCols(3);
    gw(g, layout, "out.pts.w").noalias() = cols[last].transpose() * d_pts;
    gw(g, layout, "out.pts.b") = d_pts.colwise().sum();
    dcols.noalias() += d_pts * w("out.pts.w").transpose();
  }
  Mat<Real> dh = col2im<Real>(dcols, dims, hidden).cwiseProduct(silu_grad<Real>(h[last]));
  for (int i = cfg.depth - 1; i >= 0; --i) {
    const auto ui = static_cast<std::size_t>(i);
    const std::string name = "block" + std::to_string(i);
    gw(g, layout, name + ".w").noalias() = cols[ui].transpose() * dh;
    gw(g, layout, name + ".b") = dh.colwise().sum();
    const Mat<Real> back = dh * w(name + ".w").transpose();
    dh += col2im<Real>(back, dims, hidden).cwiseProduct(silu_grad<Real>(h[ui]));
  }

  const Index frames = static_cast<Index>(dims.frames);
  Mat<Real> dtemb(frames, hidden);
  for (Index f = 0; f < frames; ++f) dtemb.row(f) = dh.middleRows(f * hw, hw).colwise().sum();
  gw(g, layout, "time.b2") = dtemb.colwise().sum();
  gw(g, layout, "time.w2").noalias() = hid.transpose() * dtemb;
  const Mat<Real> dpre1 = (dtemb * w("time.w2").transpose()).cwiseProduct(silu_grad<Real>(pre1));
  gw(g, layout, "time.w1").noalias() = emb.transpose() * dpre1;
  gw(g, layout, "time.b1") = dpre1.colwise().sum();

  Mat<Real> dv, dpf;
  if (joint && cfg.use_cross_attention) {
    Mat<Real> dv1 = dh;
    dpf = Mat<Real>::Zero(pixels, hidden);
    AttentionGrads<Real> g2{gw(g, layout, "attn2.q"), gw(g, layout, "attn2.k"), gw(g, layout, "attn2.v"),
                            gw(g, layout, "attn2.out")};
    attention_backward<Real>(pf, v1, attention("attn2"), att2, dh, dims, cfg.attention_heads, dpf, dv1, g2);
    dv = Mat<Real>::Zero(pixels, hidden);
    AttentionGrads<Real> g1{gw(g, layout, "attn1.q"), gw(g, layout, "attn1.k"), gw(g, layout, "attn1.v"),
                            gw(g, layout, "attn1.out")};
    attention_backward<Real>(v, pf, attention("attn1"), att1, dv1, dims, cfg.attention_heads, dv, dpf, g1);
  } else if (joint) {
    dv = dh;
    dpf = dh;
  } else {
    dv = std::move(dh);
  }

  gw(g, layout, "embed.vv").noalias() = cols_v.transpose() * dv;
  gw(g, layout, "embed.v.bias") = dv.colwise().sum();
  if (joint) {
    gw(g, layout, "embed.vp").noalias() = cols_p.transpose() * dv;
    gw(g, layout, "embed.pv").noalias() = cols_v.transpose() * dpf;
    gw(g, layout, "embed.pp").noalias() = cols_p.transpose() * dpf;
    gw(g, layout, "embed.p.bias") = dpf.colwise().sum();
  }
  return {g.begin(), g.end()};
}

template <typename Real>
DenoiserPass<Real>::DenoiserPass(const DenoiserConfig& cfg, const DenoiserParams& params, const VideoDims& dims,
                                 std::span<const Real> z_t, std::span<const Real> cond, int t, bool keep)
    : impl_(std::make_unique<DenoiserPassImpl<Real>>()) {
  cfg.validate();
  if (!(params.layout == make_layout(cfg)) || params.values.size() != params.layout.total) {
    throw LayoutError("parameters do not match the denoiser configuration");
  }
  if (z_t.size() != dims.pixels() * static_cast<std::size_t>(cfg.in_channels)) {
    throw ShapeError("denoiser input has " + std::to_string(z_t.size()) + " values, expected [T,H,W," +
                     std::to_string(cfg.in_channels) + "]");
  }
  if (cond.size() != dims.height * dims.width * static_cast<std::size_t>(cfg.cond_channels)) {
    throw ShapeError("conditioning frame does not match [H,W," + std::to_string(cfg.cond_channels) + "]");
  }
  impl_->cfg = cfg;
  impl_->layout = params.layout;
  impl_->p.assign(params.values.begin(), params.values.end());
  impl_->dims = dims;
  impl_->keep = keep;
  impl_->forward(z_t, cond, t);
}

template <typename Real>
DenoiserPass<Real>::~DenoiserPass() = default;
template <typename Real>
DenoiserPass<Real>::DenoiserPass(DenoiserPass&&) noexcept = default;
template <typename Real>
DenoiserPass<Real>& DenoiserPass<Real>::operator=(DenoiserPass&&) noexcept = default;

template <typename Real>
std::span<const Real> DenoiserPass<Real>::output() const {
  return impl_->out;
}

template <typename Real>
std::vector<Real> DenoiserPass<Real>::backward(std::span<const Real> d_out) const {
  return impl_->backward(d_out);
}

template class DenoiserPass<float>;
template class DenoiserPass<double>;

std::vector<float> denoise_forward(const DenoiserConfig& cfg, const DenoiserParams& params, const VideoDims& dims,
                                   std::span<const float> z_t, std::span<const float> cond, int t) {
  DenoiserPass<float> pass(cfg, params, dims, z_t, cond, t, false);
  const auto out = pass.output();
  return {out.begin(), out.end()};
}

template <typename Real>
std::pair<std::vector<Real>, std::vector<Real>> cross_attention_block(const DenoiserConfig& cfg,
                                                                      const DenoiserParams& params,
                                                                      const VideoDims& dims,
                                                                      std::span<const Real> v_feat,
                                                                      std::span<const Real> p_feat) {
  if (!cfg.use_cross_attention) throw ParameterError("configuration has no cross-attention block");
  const auto c = static_cast<Index>(cfg.hidden_channels);
  const auto rows = static_cast<Index>(dims.pixels());
  if (v_feat.size() != static_cast<std::size_t>(rows * c) || p_feat.size() != v_feat.size()) {
    throw ShapeError("cross-attention halves must both be [T,H,W," + std::to_string(c) + "]");
  }
  AlignedVec<Real> p(params.values.begin(), params.values.end());
  auto w = [&](const std::string& name) {
    const auto& l = params.layout.find(name);
    return ConstMatMap<Real>(p.data() + l.offset, static_cast<Index>(l.rows), static_cast<Index>(l.cols));
  };
  const Mat<Real> v = ConstMatMap<Real>(v_feat.data(), rows, c);
  const Mat<Real> pf = ConstMatMap<Real>(p_feat.data(), rows, c);
  const AttentionWeights<Real> w1{w("attn1.q"), w("attn1.k"), w("attn1.v"), w("attn1.out")};
  const AttentionWeights<Real> w2{w("attn2.q"), w("attn2.k"), w("attn2.v"), w("attn2.out")};
  const Mat<Real> v1 = attention_forward<Real>(v, pf, w1, dims, cfg.attention_heads, nullptr);
  const Mat<Real> p2 = attention_forward<Real>(pf, v1, w2, dims, cfg.attention_heads, nullptr);
  return {std::vector<Real>(v1.data(), v1.data() + v1.size()), std::vector<Real>(p2.data(), p2.data() + p2.size())};
}

template std::pair<std::vector<float>, std::vector<float>> cross_attention_block<float>(
    const DenoiserConfig&, const DenoiserParams&, const VideoDims&, std::span<const float>, std::span<const float>);
template std::pair<std::vector<double>, std::vector<double>> cross_attention_block<double>(
    const DenoiserConfig&, const DenoiserParams&, const VideoDims&, std::span<const double>, std::span<const double>);

}  // namespace pointvid
