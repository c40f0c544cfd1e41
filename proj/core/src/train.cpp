#include "pointvid/train.hpp"

#include <chrono>
#include <cmath>
#include <nlohmann/json.hpp>
#include <random>

#include "pointvid/error.hpp"
#include "pointvid/io.hpp"
#include "pointvid/random.hpp"
#include "pointvid/sampler.hpp"

namespace pointvid {

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::kRgb:
      return "rgb";
    case Stage::kJoint:
      return "joint";
    case Stage::kJointReg:
      return "joint+reg";
  }
  return "rgb";
}

Stage stage_from_string(const std::string& name) {
  if (name == "rgb") return Stage::kRgb;
  if (name == "joint") return Stage::kJoint;
  if (name == "joint+reg") return Stage::kJointReg;
  throw ParameterError("unknown stage '" + name + "' (expected rgb, joint or joint+reg)");
}

void TrainConfig::validate() const {
  if (iterations <= 0) throw ParameterError("iterations must be positive");
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
  if (z0_steps < 1) throw ParameterError("z0_steps must be >= 1");
  if (calibration_samples < 1) throw ParameterError("calibration_samples must be >= 1");
  if (graph_k < 1) throw ParameterError("graph_k must be >= 1");
  if (checkpoint_every < 0) throw ParameterError("checkpoint_every must be >= 0");
  optimizer.validate();
  weights.validate();
  model.validate();
  const int want = stage == Stage::kRgb ? 3 : 6;
  if (model.in_channels != want) {
    throw ParameterError("stage " + to_string(stage) + " needs a " + std::to_string(want) + "-channel model");
  }
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  const auto& w = c.weights;
  return {{"data_dir", c.data_dir},
          {"stage", to_string(c.stage)},
          {"iterations", c.iterations},
          {"batch_size", c.batch_size},
          {"optimizer", optimizer_to_json(c.optimizer)},
          {"weights",
           {{"c0", w.c0},
            {"c1", w.c1},
            {"c2", w.c2},
            {"lambda_diff", w.lambda_diff},
            {"lambda_recon", w.lambda_recon},
            {"lambda_rigid", w.lambda_rigid},
            {"cadence_k", w.cadence_k}}},
          {"z0_steps", c.z0_steps},
          {"seed", c.seed},
          {"schedule", {{"steps", c.schedule_steps}, {"beta_min", c.beta_min}, {"beta_max", c.beta_max}}},
          {"model", config_to_json(c.model)},
          {"calibrate", c.calibrate},
          {"calibration_samples", c.calibration_samples},
          {"graph_k", c.graph_k},
          {"checkpoint_every", c.checkpoint_every}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.data_dir = j.value("data_dir", c.data_dir);
  if (j.contains("stage")) c.stage = stage_from_string(j.at("stage").get<std::string>());
  c.iterations = j.value("iterations", c.iterations);
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("optimizer")) c.optimizer = optimizer_from_json(j.at("optimizer"));
  if (j.contains("weights")) {
    const auto& jw = j.at("weights");
    auto& w = c.weights;
    w = LossWeights(jw.value("c0", w.c0), jw.value("c1", w.c1), jw.value("c2", w.c2),
                    jw.value("lambda_diff", w.lambda_diff), jw.value("lambda_recon", w.lambda_recon),
                    jw.value("lambda_rigid", w.lambda_rigid), jw.value("cadence_k", w.cadence_k));
  }
  c.z0_steps = j.value("z0_steps", c.z0_steps);
  c.seed = j.value("seed", c.seed);
  if (j.contains("schedule")) {
    const auto& js = j.at("schedule");
    c.schedule_steps = js.value("steps", c.schedule_steps);
    c.beta_min = js.value("beta_min", c.beta_min);
    c.beta_max = js.value("beta_max", c.beta_max);
  }
  if (j.contains("model")) {
    c.model = config_from_json(j.at("model"));
  } else {
    c.model.in_channels = c.stage == Stage::kRgb ? 3 : 6;
    c.model.use_cross_attention = c.stage != Stage::kRgb;
  }
  c.calibrate = j.value("calibrate", c.calibrate);
  c.calibration_samples = j.value("calibration_samples", c.calibration_samples);
  c.graph_k = j.value("graph_k", c.graph_k);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  return c;
}

NoiseSchedule schedule_for(const TrainConfig& cfg) {
  return make_schedule(cfg.schedule_steps, cfg.beta_min, cfg.beta_max);
}

nlohmann::json metrics_to_json(const MetricsRecord& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"iteration", r.iteration}, {"l_diff", r.l_diff},           {"l_recon", opt(r.l_recon)},
          {"l_rigid", opt(r.l_rigid)}, {"total", r.total},             {"point_mse", opt(r.point_mse)},
          {"grad_norm", r.grad_norm}};
}

TrainState initial_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainState s;
  s.model.cfg = cfg.model;
  s.model.params = init_params(cfg.model, mix_seed(cfg.seed, 0x1417));
  s.optimizer = Optimizer(cfg.optimizer, s.model.params.values.size());
  s.weights = cfg.weights;
  return s;
}

NeighborGraph graph_for(std::span<const double> frame, std::size_t k) {
  const std::size_t n = frame.size() / 3;
  if (n < 2) return NeighborGraph{};
  return build_neighbor_graph(frame, std::min(k, n - 1));
}

namespace {

struct Draw {
  std::size_t scene = 0;
  int t = 1;
  std::vector<float> eps;
};

Draw draw(std::mt19937_64& rng, const std::vector<SceneSample>& data, int channels, const NoiseSchedule& sched) {
  Draw d;
  d.scene = std::uniform_int_distribution<std::size_t>(0, data.size() - 1)(rng);
  d.t = std::uniform_int_distribution<int>(1, sched.steps)(rng);
  std::normal_distribution<double> gauss(0.0, 1.0);
  d.eps.resize(data[d.scene].dims.pixels() * static_cast<std::size_t>(channels));
  for (auto& e : d.eps) e = static_cast<float>(gauss(rng));
  return d;
}

struct RegTerms {
  double recon = 0.0;
  double rigid = 0.0;
  double point_mse = 0.0;
  std::vector<float> grad;  // parameter gradient, empty unless requested
};

double point_mse_of(std::span<const float> z0, const SceneSample& s) {
  const std::size_t n = s.fg.size();
  if (n == 0) return 0.0;
  const std::size_t hw = s.dims.height * s.dims.width;
  double sum = 0.0;
  for (std::size_t t = 0; t < s.dims.frames; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t a = 0; a < 3; ++a) {
        const double pred = (static_cast<double>(z0[(t * hw + s.fg[i]) * 6 + 3 + a]) + 1.0) * 0.5;
        const double diff = pred - s.truth_storage[(t * n + i) * 3 + a];
        sum += diff * diff;
      }
    }
  }
  return sum / static_cast<double>(s.dims.frames * n * 3);
}

RegTerms regularize(const DenoiserModel& m, const SceneSample& s, std::span<const float> z_t, int t,
                    const TrainConfig& cfg, const LossWeights& w, const NoiseSchedule& sched, double grad_scale) {
  const bool want_grad = grad_scale != 0.0 && (w.lambda_recon > 0.0 || w.lambda_rigid > 0.0);
  const auto sample = sample_z0(m.cfg, m.params, s.dims, s.cond, z_t, t, cfg.z0_steps, sched,
                                want_grad ? GradMode::kFinalStepOnly : GradMode::kNone);
  RegTerms out;
  out.point_mse = point_mse_of(sample.z0, s);
  if (s.fg.empty()) return out;
  const PointBatch pred = decode_world_points(sample.z0, s);
  const LossValue rec = recon_loss(pred, s.truth, w);
  // Rest lengths come from the prediction's own frame 0 and are held constant.
  const NeighborGraph graph = graph_for(pred.frame(0), static_cast<std::size_t>(cfg.graph_k));
  const LossValue rig = rigid_loss(pred, graph);
  out.recon = rec.value;
  out.rigid = rig.value;
  if (want_grad) {
    std::vector<double> dworld(pred.values.size());
    for (std::size_t i = 0; i < dworld.size(); ++i) {
      dworld[i] = grad_scale * (w.lambda_recon * rec.grad[i] + w.lambda_rigid * rig.grad[i]);
    }
    out.grad = sample.backward(world_grad_to_z(sample.z0, dworld, s));
  }
  return out;
}

bool all_finite(std::span<const float> v) {
  for (float x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void dump_batch(const TrainConfig& cfg, std::int64_t iter, const SceneSample& s, std::span<const float> z_t,
                const Draw& d, int channels, const std::string& reason) {
  if (cfg.dump_dir.empty()) return;
  namespace fs = std::filesystem;
  const fs::path dir(cfg.dump_dir);
  fs::create_directories(dir);
  const Shape shape{s.dims.frames, s.dims.height, s.dims.width, static_cast<std::size_t>(channels)};
  // Non-finite values cannot live in a .vpt file; they are zeroed and counted in the report.
  auto sanitized = [&](std::span<const float> v, std::size_t& bad) {
    std::vector<float> out(v.begin(), v.end());
    for (auto& x : out) {
      if (!std::isfinite(x)) {
        x = 0.0f;
        ++bad;
      }
    }
    return TensorF(shape, std::move(out));
  };
  std::size_t bad_zt = 0;
  std::size_t bad_eps = 0;
  write_tensor(sanitized(z_t, bad_zt), dir / "z_t.vpt");
  write_tensor(sanitized(d.eps, bad_eps), dir / "eps.vpt");
  const nlohmann::json report = {{"iteration", iter},         {"scene", s.name},
                                 {"t", d.t},                  {"reason", reason},
                                 {"nonfinite_z_t", bad_zt},   {"nonfinite_eps", bad_eps},
                                 {"config", train_config_to_json(cfg)}};
  write_text_atomic(dir / "report.json", report.dump(2) + "\n");
}

}  // namespace

MetricsRecord train_step(TrainState& state, const std::vector<SceneSample>& data, const TrainConfig& cfg,
                         const NoiseSchedule& sched) {
  if (data.empty()) throw ParameterError("training needs at least one scene");
  const auto start = std::chrono::steady_clock::now();
  const int channels = state.model.cfg.in_channels;
  const std::int64_t iter = state.iteration;
  const LossWeights& w = state.weights;
  const bool reg = cfg.stage == Stage::kJointReg && iter % w.cadence_k == 0;
  const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);

  std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(iter)));
  std::vector<float> grad(state.model.params.values.size(), 0.0f);
  MetricsRecord rec;
  rec.iteration = iter;
  double recon_sum = 0.0;
  double rigid_sum = 0.0;
  double mse_sum = 0.0;

  for (int b = 0; b < cfg.batch_size; ++b) {
    const Draw d = draw(rng, data, channels, sched);
    const SceneSample& s = data[d.scene];
    const auto z_t = add_noise(s.z0_channels(channels), d.eps, d.t, sched);
    DenoiserPass<float> pass(state.model.cfg, state.model.params, s.dims, z_t, s.cond, d.t, true);
    const auto eps_hat = pass.output();
    const double l_diff = diff_loss(eps_hat, d.eps);
    if (!std::isfinite(l_diff)) {
      dump_batch(cfg, iter, s, z_t, d, channels, "non-finite diffusion loss");
      throw NumericError("non-finite diffusion loss at iteration " + std::to_string(iter) + " (scene " + s.name + ")");
    }
    const double coef = w.lambda_diff * 2.0 * inv_batch / static_cast<double>(eps_hat.size());
    std::vector<float> d_out(eps_hat.size());
    for (std::size_t i = 0; i < d_out.size(); ++i) {
      d_out[i] = static_cast<float>(coef * (static_cast<double>(eps_hat[i]) - d.eps[i]));
    }
    const auto g = pass.backward(d_out);
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
    rec.l_diff += l_diff * inv_batch;

    if (reg) {
      const RegTerms r = regularize(state.model, s, z_t, d.t, cfg, w, sched, inv_batch);
      if (!std::isfinite(r.recon) || !std::isfinite(r.rigid)) {
        dump_batch(cfg, iter, s, z_t, d, channels, "non-finite regularization loss");
        throw NumericError("non-finite regularization loss at iteration " + std::to_string(iter));
      }
      for (std::size_t i = 0; i < r.grad.size(); ++i) grad[i] += r.grad[i];
      recon_sum += r.recon * inv_batch;
      rigid_sum += r.rigid * inv_batch;
      mse_sum += r.point_mse * inv_batch;
    }
    if (!all_finite(grad)) {
      dump_batch(cfg, iter, s, z_t, d, channels, "non-finite gradient");
      throw NumericError("non-finite gradient at iteration " + std::to_string(iter));
    }
  }

  if (reg) {
    rec.l_recon = recon_sum;
    rec.l_rigid = rigid_sum;
    rec.point_mse = mse_sum;
    rec.total = total_loss(rec.l_diff, recon_sum, rigid_sum, w);
  } else {
    rec.total = w.lambda_diff * rec.l_diff;
  }
  rec.grad_norm = state.optimizer.step(state.model.params.values, grad);
  ++state.iteration;
  rec.wall_clock_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

LossWeights lambdas_from_means(const LossMeans& means, const LossWeights& base, bool* warned) {
  const BalancedWeights b = balance_to_first({means.diff, means.recon, means.rigid});
  if (warned) *warned = b.warned;
  LossWeights w = base;
  w.lambda_diff = b.weights[0];
  w.lambda_recon = b.weights[1];
  w.lambda_rigid = b.weights[2];
  return w;
}

Calibration calibrate_lambdas(const DenoiserModel& model, const std::vector<SceneSample>& data,
                              const TrainConfig& cfg, const NoiseSchedule& sched) {
  if (data.empty()) throw ParameterError("calibration needs at least one sample batch");
  if (model.cfg.in_channels != 6) throw ParameterError("calibration needs the joint model");

  struct Probe {
    double diff = 0.0;
    PointBatch pred;
    const SceneSample* scene = nullptr;
  };
  std::vector<Probe> probes;
  for (int i = 0; i < cfg.calibration_samples; ++i) {
    std::mt19937_64 rng(mix_seed(cfg.seed ^ 0xca11b7a7e5ULL, static_cast<std::uint64_t>(i)));
    const Draw d = draw(rng, data, 6, sched);
    const SceneSample& s = data[d.scene];
    const auto z_t = add_noise(s.z0, d.eps, d.t, sched);
    Probe p;
    p.scene = &s;
    p.diff = diff_loss(denoise_forward(model.cfg, model.params, s.dims, z_t, s.cond, d.t), d.eps);
    const auto z0 = sample_z0(model.cfg, model.params, s.dims, s.cond, z_t, d.t, cfg.z0_steps, sched, GradMode::kNone);
    p.pred = decode_world_points(z0.z0, s);
    probes.push_back(std::move(p));
  }

  std::vector<std::pair<PointBatch, PointBatch>> pairs;
  for (const auto& p : probes) {
    if (p.pred.count > 0) pairs.emplace_back(p.pred, p.scene->truth);
  }
  Calibration out;
  out.weights = cfg.weights;
  if (!pairs.empty()) {
    const BalancedWeights c = calibrate_c(pairs);
    out.weights.c0 = c.weights[0];
    out.weights.c1 = c.weights[1];
    out.weights.c2 = c.weights[2];
    out.warned = c.warned;
  }
  const double inv = 1.0 / static_cast<double>(probes.size());
  for (const auto& p : probes) {
    out.means.diff += p.diff * inv;
    if (p.pred.count == 0) continue;
    out.means.recon += recon_loss(p.pred, p.scene->truth, out.weights).value * inv;
    out.means.rigid += rigid_loss(p.pred, graph_for(p.pred.frame(0), static_cast<std::size_t>(cfg.graph_k))).value * inv;
  }
  bool warned = false;
  out.weights = lambdas_from_means(out.means, out.weights, &warned);
  out.warned = out.warned || warned;
  return out;
}

}  // namespace pointvid
