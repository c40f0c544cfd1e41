#include "pointvid/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <random>
#include <thread>

#include "pointvid/checkpoint.hpp"
#include "pointvid/error.hpp"
#include "pointvid/io.hpp"
#include "pointvid/random.hpp"
#include "pointvid/sampler.hpp"
#include "pointvid/scene.hpp"

namespace pointvid {

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("POINTVID_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  const std::string s(raw);
  if (!std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw ParameterError("POINTVID_SEED must be an unsigned integer, got '" + s + "'");
  }
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw ParameterError("POINTVID_SEED is out of range: '" + s + "'");
  }
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json manifest_to_json(const RunManifest& m) {
  return {{"command", m.command}, {"config", m.config},   {"inputs", m.inputs},     {"outputs", m.outputs},
          {"seed", m.seed},       {"version", m.version}, {"started", m.started}, {"finished", m.finished}};
}

void write_manifest(RunManifest m, const fs::path& file) {
  m.finished = utc_timestamp();
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  write_text_atomic(file, manifest_to_json(m).dump(2) + "\n");
}

namespace {

// Runs fn(i) for i in [0, n) on up to `jobs` threads. The error of the lowest failing index is
// rethrown, so the outcome does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || n < 2) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string scene_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04zu", i);
  return buf;
}

nlohmann::json read_json(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw InputError("missing " + p.string());
  const auto bytes = read_file(p);
  try {
    return nlohmann::json::parse(reinterpret_cast<const char*>(bytes.data()),
                                 reinterpret_cast<const char*>(bytes.data()) + bytes.size());
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(p.string() + ": " + e.what());
  }
}

TensorF read_required(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw InputError("missing " + p.string());
  return read_tensor(p);
}

}  // namespace

// --- gen-data --------------------------------------------------------------------------------

void GenDataOptions::validate() const {
  if (scenes < 1) throw ParameterError("--scenes must be >= 1");
  if (frames < 2) throw ParameterError("--frames must be >= 2");
  if (height < 1 || width < 1) throw ParameterError("--size must have positive extents");
  if (stride < 1) throw ParameterError("--stride must be >= 1");
  if (out.empty()) throw ParameterError("--out is required");
  if (jobs < 1) throw ParameterError("--jobs must be >= 1");
}

nlohmann::json to_json(const GenDataOptions& o) {
  return {{"scenes", o.scenes}, {"frames", o.frames}, {"height", o.height}, {"width", o.width},
          {"stride", o.stride}, {"out", o.out.string()}, {"seed", o.seed}, {"jobs", o.jobs}};
}

void gen_scene(std::uint64_t seed, const GenDataOptions& opts, const fs::path& dir) {
  const SceneSpec spec = random_scene(seed, opts.frames, opts.height, opts.width);
  const SceneStates states = simulate(spec);
  const RenderResult rendered = render(spec, states);
  const TrackSet tracks = extract_tracks(spec, states, opts.stride);
  fs::create_directories(dir);
  write_tensor(rendered.video.tensor(), dir / "video.vpt");
  write_tensor(tracks_to_tensor(tracks), dir / "tracks.vpt");
  write_tensor(rendered.masks.front().to_tensor(), dir / "mask.vpt");
  write_text_atomic(dir / "scene.json", scene_to_json(spec).dump(2) + "\n");
}

void gen_dataset(const GenDataOptions& opts) {
  opts.validate();
  std::error_code ec;
  fs::create_directories(opts.out, ec);
  if (ec || !fs::is_directory(opts.out)) throw InputError("cannot create output directory " + opts.out.string());
  parallel_for(opts.scenes, opts.jobs, [&](std::size_t i) {
    gen_scene(mix_seed(opts.seed, i), opts, opts.out / scene_name(i));
  });
}

// --- prep ------------------------------------------------------------------------------------

void PrepOptions::validate() const {
  if (in.empty() || out.empty()) throw ParameterError("prep needs --in and --out");
  noise.validate();
  kalman.validate();
  if (knn < 1) throw ParameterError("--knn must be >= 1");
  if (stride < 1) throw ParameterError("--stride must be >= 1");
  if (jobs < 1) throw ParameterError("--jobs must be >= 1");
}

bool PrepOptions::smoothing_enabled() const {
  switch (smoothing) {
    case SmoothingMode::kOn:
      return true;
    case SmoothingMode::kOff:
      return false;
    case SmoothingMode::kAuto:
      break;
  }
  return noise.sigma > 0.0 || noise.outlier_prob > 0.0;
}

nlohmann::json to_json(const PrepOptions& o) {
  return {{"in", o.in.string()},
          {"out", o.out.string()},
          {"sigma", o.noise.sigma},
          {"outlier_prob", o.noise.outlier_prob},
          {"outlier_scale", o.noise.outlier_scale},
          {"noise_seed", o.noise.seed},
          {"smoothing", o.smoothing_enabled()},
          {"kalman_q", o.kalman.process_var},
          {"kalman_r", o.kalman.measure_var},
          {"knn", o.knn},
          {"stride", o.stride},
          {"jobs", o.jobs}};
}

std::vector<fs::path> scene_dirs(const fs::path& dir, const std::string& marker) {
  if (!fs::is_directory(dir)) throw InputError("directory " + dir.string() + " does not exist");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::is_regular_file(e.path() / marker)) out.push_back(e.path());
  }
  if (out.empty()) throw InputError("no scene directories with " + marker + " under " + dir.string());
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

TrackSet keep_every(const TrackSet& tracks, std::size_t stride) {
  if (stride == 1) return tracks;
  TrackSet out;
  out.frames = tracks.frames;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < tracks.count; i += stride) keep.push_back(i);
  out.count = keep.size();
  out.world.resize(out.frames * out.count);
  for (std::size_t t = 0; t < out.frames; ++t) {
    for (std::size_t k = 0; k < keep.size(); ++k) out.at(t, k) = tracks.at(t, keep[k]);
  }
  for (std::size_t i : keep) {
    out.anchor_u.push_back(tracks.anchor_u[i]);
    out.anchor_v.push_back(tracks.anchor_v[i]);
    out.object_id.push_back(tracks.object_id[i]);
  }
  return out;
}

}  // namespace

PrepStats prep_dataset(const PrepOptions& opts) {
  opts.validate();
  const auto dirs = scene_dirs(opts.in, "tracks.vpt");
  std::error_code ec;
  fs::create_directories(opts.out, ec);
  if (ec || !fs::is_directory(opts.out)) throw InputError("cannot create output directory " + opts.out.string());
  const bool same_dir = fs::equivalent(opts.in, opts.out);
  std::vector<std::array<std::size_t, 2>> counts(dirs.size());
  parallel_for(dirs.size(), opts.jobs, [&](std::size_t i) {
    const fs::path& src = dirs[i];
    const RgbVideo video(read_required(src / "video.vpt"));
    const ForegroundMask mask = ForegroundMask::from_tensor(read_required(src / "mask.vpt"));
    const SceneSpec spec = scene_from_json(read_json(src / "scene.json"));
    TrackSet tracks = keep_every(tracks_from_tensor(read_required(src / "tracks.vpt")), opts.stride);
    if (tracks.frames != video.frames()) throw ShapeError(src.string() + ": tracks and video disagree on T");
    if (opts.noise.sigma > 0.0 || opts.noise.outlier_prob > 0.0) {
      NoiseSpec noise = opts.noise;
      noise.seed = mix_seed(opts.noise.seed, i);
      tracks = inject_noise(tracks, noise);
    }
    if (opts.smoothing_enabled()) tracks = kalman_smooth(tracks, opts.kalman).tracks;
    const InterpolationPlan plan = plan_interpolation(tracks, mask, opts.knn);
    for (const auto& px : plan.pixels) ++counts[i][px.tracked ? 0 : 1];
    const PointGrid grid = build_point_grid(tracks, mask, spec.camera, video.height(), video.width(), opts.knn);
    const fs::path dst = opts.out / src.filename();
    fs::create_directories(dst);
    write_tensor(grid.tensor(), dst / "pointgrid.vpt");
    write_tensor(concat_vp(video, grid).tensor(), dst / "joint.vpt");
    if (!same_dir) {
      fs::copy_file(src / "mask.vpt", dst / "mask.vpt", fs::copy_options::overwrite_existing);
      fs::copy_file(src / "scene.json", dst / "scene.json", fs::copy_options::overwrite_existing);
    }
  });
  PrepStats stats;
  stats.scenes = dirs.size();
  for (const auto& c : counts) {
    stats.tracked_pixels += c[0];
    stats.interpolated_pixels += c[1];
  }
  return stats;
}

// --- training --------------------------------------------------------------------------------

TrainRunResult run_training(const TrainRunOptions& opts) {
  TrainConfig cfg = opts.config;
  std::ostream* log = opts.log;
  const auto data = load_dataset(cfg.data_dir);
  for (const auto& s : data) {
    if (s.dims.frames != data[0].dims.frames || s.dims.height != data[0].dims.height ||
        s.dims.width != data[0].dims.width) {
      throw ShapeError("scene " + s.name + " has a different video size than " + data[0].name);
    }
  }
  const VideoDims dims = data[0].dims;
  fs::create_directories(opts.out);

  TrainRunResult result;
  TrainState state;
  if (cfg.stage == Stage::kRgb) {
    if (opts.resume) {
      Checkpoint ck = load_checkpoint(*opts.resume);
      if (ck.state.model.cfg.in_channels != 3) throw StagingError("stage rgb cannot resume a joint checkpoint");
      cfg.model = ck.state.model.cfg;
      state = std::move(ck.state);
    } else {
      state = initial_state(cfg);
    }
  } else {
    if (!opts.resume) {
      throw StagingError("stage " + to_string(cfg.stage) + " needs --resume with an RGB (or same-stage) checkpoint");
    }
    Checkpoint ck = load_checkpoint(*opts.resume);
    if (ck.state.model.cfg.in_channels == 3) {
      const bool attn = cfg.model.in_channels == 6 ? cfg.model.use_cross_attention : true;
      auto [jcfg, jparams] = augment_channels(ck.state.model.cfg, ck.state.model.params, attn,
                                              mix_seed(cfg.seed, 0xa7a7));
      cfg.model = jcfg;
      state.model = {jcfg, std::move(jparams)};
      state.optimizer = Optimizer(cfg.optimizer, state.model.params.values.size());
      state.iteration = 0;
      state.weights = cfg.weights;
      Checkpoint init{state, cfg, dims};
      result.init_checkpoint = opts.out / "checkpoint_init";
      save_checkpoint(init, *result.init_checkpoint);
    } else {
      if (ck.config.stage != cfg.stage) {
        throw StagingError("checkpoint was trained in stage " + to_string(ck.config.stage) + ", not " +
                           to_string(cfg.stage));
      }
      cfg.model = ck.state.model.cfg;
      cfg.optimizer = ck.state.optimizer.config();
      state = std::move(ck.state);
    }
  }
  cfg.validate();
  const NoiseSchedule sched = schedule_for(cfg);

  if (cfg.stage == Stage::kJointReg && state.iteration == 0 && cfg.calibrate) {
    const Calibration cal = calibrate_lambdas(state.model, data, cfg, sched);
    state.weights = cal.weights;
    const nlohmann::json jc = {{"c", {cal.weights.c0, cal.weights.c1, cal.weights.c2}},
                               {"lambda", {cal.weights.lambda_diff, cal.weights.lambda_recon, cal.weights.lambda_rigid}},
                               {"mean_loss", {cal.means.diff, cal.means.recon, cal.means.rigid}},
                               {"warned", cal.warned}};
    write_text_atomic(opts.out / "calibration.json", jc.dump(2) + "\n");
    if (cal.warned && log) *log << "warning: a calibration mean was zero; its weight was set to 0\n";
  }
  cfg.weights = state.weights;

  std::ofstream metrics(opts.out / "metrics.jsonl", std::ios::trunc);
  std::ofstream timing(opts.out / "timing.jsonl", std::ios::trunc);
  if (!metrics || !timing) throw InputError("cannot write metrics under " + opts.out.string());
  const auto save = [&](const fs::path& dir) { save_checkpoint(Checkpoint{state, cfg, dims}, dir); };
  while (state.iteration < cfg.iterations) {
    const MetricsRecord rec = train_step(state, data, cfg, sched);
    metrics << metrics_to_json(rec).dump() << '\n';
    timing << nlohmann::json{{"iteration", rec.iteration}, {"wall_clock_ms", rec.wall_clock_ms}}.dump() << '\n';
    if (log && (rec.iteration % 100 == 0 || state.iteration == cfg.iterations)) {
      *log << "iter " << rec.iteration << " l_diff " << rec.l_diff;
      if (rec.l_recon) *log << " l_recon " << *rec.l_recon << " l_rigid " << *rec.l_rigid;
      *log << " (" << static_cast<long>(rec.wall_clock_ms) << " ms)\n";
    }
    if (cfg.checkpoint_every > 0 && state.iteration % cfg.checkpoint_every == 0 &&
        state.iteration < cfg.iterations) {
      char name[48];
      std::snprintf(name, sizeof name, "checkpoint_%06lld", static_cast<long long>(state.iteration));
      save(opts.out / name);
    }
  }
  metrics.flush();
  timing.flush();
  result.checkpoint = opts.out / "checkpoint";
  save(result.checkpoint);
  write_text_atomic(opts.out / "config.json", train_config_to_json(cfg).dump(2) + "\n");
  result.config = cfg;
  result.iterations = state.iteration;
  return result;
}

EvalReport eval_checkpoint(const fs::path& ckpt, const fs::path& data, const EvalConfig& config) {
  const Checkpoint ck = load_checkpoint(ckpt);
  if (ck.state.model.cfg.in_channels != 6) throw ParameterError("evaluation needs a joint (6-channel) checkpoint");
  const auto scenes = load_dataset(data);
  return evaluate_model(ck.state.model, scenes, config, schedule_for(ck.config));
}

// --- sample / render -------------------------------------------------------------------------

nlohmann::json to_json(const SampleOptions& o) {
  return {{"ckpt", o.ckpt.string()}, {"cond", o.cond.string()}, {"out", o.out.string()},
          {"steps", o.steps},        {"seed", o.seed}};
}

fs::path sample_video(const SampleOptions& opts) {
  if (opts.steps < 1) throw ParameterError("--steps must be >= 1");
  const Checkpoint ck = load_checkpoint(opts.ckpt);
  if (!fs::is_regular_file(opts.cond)) throw InputError("missing conditioning frame " + opts.cond.string());
  const TensorF frame = read_ppm(opts.cond);
  if (frame.dim(0) != ck.dims.height || frame.dim(1) != ck.dims.width) {
    throw InputError("conditioning frame is " + std::to_string(frame.dim(1)) + "x" + std::to_string(frame.dim(0)) +
                     " but the model was trained at " + std::to_string(ck.dims.width) + "x" +
                     std::to_string(ck.dims.height));
  }
  const auto& model = ck.state.model;
  const NoiseSchedule sched = schedule_for(ck.config);
  const TensorF cond = to_diffusion_range(frame);
  const auto channels = static_cast<std::size_t>(model.cfg.in_channels);
  std::mt19937_64 rng(mix_seed(opts.seed, 0x5a5a));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<float> z(ck.dims.pixels() * channels);
  for (auto& x : z) x = static_cast<float>(gauss(rng));
  auto result = sample_z0(model.cfg, model.params, ck.dims, cond.data(), z, sched.steps, opts.steps, sched,
                          GradMode::kNone);
  for (auto& x : result.z0) x = std::clamp((x + 1.0f) * 0.5f, 0.0f, 1.0f);
  fs::create_directories(opts.out);
  const fs::path path = opts.out / (channels == 6 ? "joint.vpt" : "video.vpt");
  write_tensor(TensorF({ck.dims.frames, ck.dims.height, ck.dims.width, channels}, std::move(result.z0)), path);
  return path;
}

RenderStats render_joint(const RenderOptions& opts) {
  const TensorF joint = read_required(opts.in);
  if (joint.rank() != 4 || joint.dim(3) != 6) {
    throw ShapeError(opts.in.string() + " must be [T,H,W,6], got " + shape_string(joint.dims()));
  }
  const std::size_t frames = joint.dim(0);
  const std::size_t h = joint.dim(1);
  const std::size_t w = joint.dim(2);
  const CameraIntrinsics cam = opts.scene ? scene_from_json(read_json(*opts.scene)).camera : default_camera(h, w);
  if (cam.width != w || cam.height != h) throw InputError("camera resolution does not match the joint tensor");

  TensorF rgb = slice_last_axis(joint, 0, 3);
  for (auto& x : rgb.storage()) x = std::clamp(x, 0.0f, 1.0f);
  fs::create_directories(opts.out);
  write_ppm_frames(RgbVideo(rgb), opts.out);

  const double threshold = cam.near / cam.far;
  RenderStats stats;
  stats.frames = frames;
  for (std::size_t t = 0; t < frames; ++t) {
    std::vector<PlyPoint> pts;
    for (std::size_t p = 0; p < h * w; ++p) {
      const std::size_t base = ((t * h * w) + p) * 6;
      const Eigen::Vector3d uvd(joint[base + 3], joint[base + 4], joint[base + 5]);
      if (!(uvd.z() > threshold)) continue;
      const Eigen::Vector3d xyz = unproject_normalized(uvd, cam);
      // depth ramp: near -> warm, far -> cool
      const double s = std::clamp((uvd.z() - threshold) / (1.0 - threshold), 0.0, 1.0);
      const auto lvl = [](double v) { return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0))); };
      pts.push_back({{xyz.x(), xyz.y(), xyz.z()}, std::array<std::uint8_t, 3>{lvl(1.0 - s), lvl(0.25), lvl(s)}});
    }
    stats.points_per_frame_max = std::max(stats.points_per_frame_max, pts.size());
    char name[32];
    std::snprintf(name, sizeof name, "points_%03zu.ply", t);
    write_ply(pts, opts.out / name);
  }
  return stats;
}

}  // namespace pointvid
