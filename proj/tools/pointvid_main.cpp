// pointvid: synthetic dataset generation, track preparation, training, evaluation, sampling and rendering.
//
// Exit codes: 0 success, 2 input/config error, 3 pipeline error, 4 staging error.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <nlohmann/json.hpp>
#include <regex>

#include "pointvid/checkpoint.hpp"
#include "pointvid/error.hpp"
#include "pointvid/io.hpp"
#include "pointvid/pipeline.hpp"
#include "pointvid/runtime.hpp"

namespace {

using namespace pointvid;

constexpr int kExitInput = 2;
constexpr int kExitPipeline = 3;
constexpr int kExitStaging = 4;

// Explicit --seed > POINTVID_SEED > config file > default.
std::uint64_t resolve_seed(const CLI::Option* flag, std::uint64_t flag_value, std::uint64_t fallback) {
  if (flag->count() > 0) return flag_value;
  if (const auto env = env_seed()) return *env;
  return fallback;
}

std::pair<std::size_t, std::size_t> parse_size(const std::string& s) {
  static const std::regex re(R"((\d+)x(\d+))");
  std::smatch m;
  if (!std::regex_match(s, m, re)) throw ParameterError("--size must look like HxW, got '" + s + "'");
  const auto h = std::stoul(m[1].str());
  const auto w = std::stoul(m[2].str());
  if (h == 0 || w == 0) throw ParameterError("--size extents must be positive");
  return {h, w};
}

RunManifest start_manifest(const std::string& command) {
  RunManifest m;
  m.command = command;
  m.version = POINTVID_VERSION;
  m.started = utc_timestamp();
  return m;
}

nlohmann::json load_json_file(const std::string& path) {
  const auto bytes = read_file(path);
  try {
    return nlohmann::json::parse(reinterpret_cast<const char*>(bytes.data()),
                                 reinterpret_cast<const char*>(bytes.data()) + bytes.size());
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"pointvid: joint video and 3D point-trajectory diffusion on synthetic rigid-body scenes"};
  app.set_version_flag("--version", std::string(POINTVID_VERSION));
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate synthetic rigid-body scenes");
  GenDataOptions gen_opts;
  std::string gen_size = "32x32";
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  gen->add_option("--scenes", gen_opts.scenes, "Number of scenes")->capture_default_str();
  gen->add_option("--frames", gen_opts.frames, "Frames per scene (>= 2)")->capture_default_str();
  gen->add_option("--size", gen_size, "Resolution HxW")->capture_default_str();
  gen->add_option("--stride", gen_opts.stride, "Track sampling stride in pixels")->capture_default_str();
  gen->add_option("--out", gen_out, "Output directory")->required();
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "Dataset seed");
  gen->add_option("--jobs", gen_opts.jobs, "Worker threads")->capture_default_str();

  // prep
  auto* prep = app.add_subcommand("prep", "Turn sparse tracks into pixel-aligned point grids and joint tensors");
  PrepOptions prep_opts;
  std::string prep_in;
  std::string prep_out;
  bool prep_kalman = false;
  bool prep_no_kalman = false;
  std::uint64_t prep_seed = 0;
  prep->add_option("--in", prep_in, "Directory written by gen-data")->required();
  prep->add_option("--out", prep_out, "Output directory (may equal --in)")->required();
  prep->add_option("--sigma", prep_opts.noise.sigma, "Tracker noise std dev, scene units")->capture_default_str();
  prep->add_option("--outlier-prob", prep_opts.noise.outlier_prob, "Per-sample outlier probability")
      ->capture_default_str();
  prep->add_option("--outlier-scale", prep_opts.noise.outlier_scale, "Outlier std dev as a multiple of sigma")
      ->capture_default_str();
  prep->add_option("--kalman-q", prep_opts.kalman.process_var, "Kalman process variance")->capture_default_str();
  prep->add_option("--kalman-r", prep_opts.kalman.measure_var, "Kalman measurement variance")->capture_default_str();
  auto* kal_on = prep->add_flag("--kalman", prep_kalman, "Always smooth tracks");
  auto* kal_off = prep->add_flag("--no-kalman", prep_no_kalman, "Never smooth tracks");
  kal_on->excludes(kal_off);
  prep->add_option("--knn", prep_opts.knn, "Anchors per interpolated pixel")->capture_default_str();
  prep->add_option("--stride", prep_opts.stride, "Keep every n-th track")->capture_default_str();
  auto* prep_seed_opt = prep->add_option("--seed", prep_seed, "Noise seed");
  prep->add_option("--jobs", prep_opts.jobs, "Worker threads")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "Train the denoiser (rgb, joint or joint+reg stage)");
  std::string train_config_file;
  std::string train_stage;
  std::string train_resume;
  std::string train_out;
  std::string train_data;
  int train_iterations = 0;
  double train_lr = 0.0;
  std::uint64_t train_seed = 0;
  int train_cadence = 0;
  train->add_option("--config", train_config_file, "Training config JSON");
  train->add_option("--stage", train_stage, "rgb | joint | joint+reg");
  train->add_option("--resume", train_resume, "Checkpoint directory to resume or augment");
  train->add_option("--out", train_out, "Run directory")->required();
  auto* data_opt = train->add_option("--data", train_data, "Prepared dataset directory");
  auto* iter_opt = train->add_option("--iterations", train_iterations, "Total iterations");
  auto* lr_opt = train->add_option("--lr", train_lr, "Learning rate");
  auto* train_seed_opt = train->add_option("--seed", train_seed, "Training seed");
  auto* cadence_opt = train->add_option("--cadence", train_cadence, "Regularize every k iterations");

  // eval
  auto* ev = app.add_subcommand("eval", "Score a joint checkpoint on held-out scenes");
  std::string eval_ckpt;
  std::string eval_data;
  std::string eval_out;
  EvalConfig eval_cfg;
  std::uint64_t eval_seed = 0;
  ev->add_option("--ckpt", eval_ckpt, "Checkpoint directory")->required();
  ev->add_option("--data", eval_data, "Prepared evaluation scenes")->required();
  ev->add_option("--out", eval_out, "report.json path")->required();
  ev->add_option("--t", eval_cfg.t, "Noise level to recover from")->capture_default_str();
  ev->add_option("--steps", eval_cfg.steps, "DDIM steps")->capture_default_str();
  ev->add_option("--samples", eval_cfg.n_samples, "Noise draws per scene")->capture_default_str();
  auto* eval_seed_opt = ev->add_option("--seed", eval_seed, "Evaluation noise seed");

  // sample
  auto* sm = app.add_subcommand("sample", "Generate a video (and trajectories) from a conditioning frame");
  SampleOptions sample_opts;
  std::string sample_ckpt;
  std::string sample_cond;
  std::string sample_out;
  std::uint64_t sample_seed = 0;
  sm->add_option("--ckpt", sample_ckpt, "Checkpoint directory")->required();
  sm->add_option("--cond", sample_cond, "Conditioning frame (binary PPM)")->required();
  sm->add_option("--out", sample_out, "Output directory")->required();
  sm->add_option("--steps", sample_opts.steps, "DDIM steps")->capture_default_str();
  auto* sample_seed_opt = sm->add_option("--seed", sample_seed, "Sampling seed");

  // render
  auto* rd = app.add_subcommand("render", "Write PPM frames and per-frame PLY point clouds from a joint tensor");
  std::string render_in;
  std::string render_out;
  std::string render_scene;
  rd->add_option("--in", render_in, "joint.vpt")->required();
  rd->add_option("--out", render_out, "Output directory")->required();
  rd->add_option("--scene", render_scene, "scene.json providing the camera (default camera otherwise)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    if (*gen) {
      auto m = start_manifest("gen-data");
      std::tie(gen_opts.height, gen_opts.width) = parse_size(gen_size);
      gen_opts.out = gen_out;
      gen_opts.seed = resolve_seed(gen_seed_opt, gen_seed, 0);
      gen_dataset(gen_opts);
      m.config = to_json(gen_opts);
      m.seed = gen_opts.seed;
      m.outputs = {{"dir", gen_out}};
      write_manifest(m, fs::path(gen_out) / "manifest.json");
      std::cout << "wrote " << gen_opts.scenes << " scenes to " << gen_out << "\n";
    } else if (*prep) {
      auto m = start_manifest("prep");
      prep_opts.in = prep_in;
      prep_opts.out = prep_out;
      prep_opts.noise.seed = resolve_seed(prep_seed_opt, prep_seed, 0);
      if (prep_kalman) prep_opts.smoothing = SmoothingMode::kOn;
      if (prep_no_kalman) prep_opts.smoothing = SmoothingMode::kOff;
      const PrepStats stats = prep_dataset(prep_opts);
      m.config = to_json(prep_opts);
      m.seed = prep_opts.noise.seed;
      m.inputs = {{"dir", prep_in}};
      m.outputs = {{"dir", prep_out}};
      write_manifest(m, fs::path(prep_out) / "manifest.json");
      std::cout << "prepared " << stats.scenes << " scenes (" << stats.tracked_pixels << " tracked, "
                << stats.interpolated_pixels << " interpolated pixels)\n";
    } else if (*train) {
      auto m = start_manifest("train");
      nlohmann::json j = nlohmann::json::object();
      if (!train_config_file.empty()) j = load_json_file(train_config_file);
      // Stage decides the default model width, so it is applied before parsing the rest.
      if (!train_stage.empty()) {
        stage_from_string(train_stage);
        if (j.value("stage", std::string()) != train_stage) j.erase("model");
        j["stage"] = train_stage;
      }
      TrainConfig cfg = train_config_from_json(j);
      if (data_opt->count()) cfg.data_dir = train_data;
      if (iter_opt->count()) cfg.iterations = train_iterations;
      if (lr_opt->count()) cfg.optimizer.lr = train_lr;
      if (cadence_opt->count()) cfg.weights.cadence_k = train_cadence;
      cfg.seed = resolve_seed(train_seed_opt, train_seed, cfg.seed);
      if (cfg.data_dir.empty()) throw ParameterError("no dataset: pass --data or set data_dir in the config");
      cfg.dump_dir = (fs::path(train_out) / "nan_dump").string();
      TrainRunOptions run{cfg, train_out, std::nullopt, &std::cerr};
      if (!train_resume.empty()) run.resume = train_resume;
      const TrainRunResult res = run_training(run);
      m.config = train_config_to_json(res.config);
      m.seed = res.config.seed;
      m.inputs = {{"data", res.config.data_dir}, {"resume", train_resume}};
      m.outputs = {{"checkpoint", res.checkpoint.string()},
                   {"metrics", (fs::path(train_out) / "metrics.jsonl").string()}};
      if (res.init_checkpoint) m.outputs["checkpoint_init"] = res.init_checkpoint->string();
      write_manifest(m, fs::path(train_out) / "manifest.json");
      std::cout << "trained to iteration " << res.iterations << "; checkpoint " << res.checkpoint.string() << "\n";
    } else if (*ev) {
      auto m = start_manifest("eval");
      eval_cfg.seed = resolve_seed(eval_seed_opt, eval_seed, 0);
      const EvalReport report = eval_checkpoint(eval_ckpt, eval_data, eval_cfg);
      const fs::path out(eval_out);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      write_text_atomic(out, report_to_json(report).dump(2) + "\n");
      m.config = {{"t", eval_cfg.t}, {"steps", eval_cfg.steps}, {"n_samples", eval_cfg.n_samples},
                  {"seed", eval_cfg.seed}, {"graph_k", eval_cfg.graph_k}};
      m.seed = eval_cfg.seed;
      m.inputs = {{"ckpt", eval_ckpt}, {"data", eval_data}};
      m.outputs = {{"report", eval_out}};
      fs::path mpath = out;
      mpath.replace_extension(".manifest.json");
      write_manifest(m, mpath);
      std::printf("point_mse %.6g  rigidity %.6g  smoothness %.6g\n", report.point_mse, report.rigidity,
                  report.smoothness);
    } else if (*sm) {
      auto m = start_manifest("sample");
      sample_opts.ckpt = sample_ckpt;
      sample_opts.cond = sample_cond;
      sample_opts.out = sample_out;
      sample_opts.seed = resolve_seed(sample_seed_opt, sample_seed, 0);
      const fs::path written = sample_video(sample_opts);
      m.config = to_json(sample_opts);
      m.seed = sample_opts.seed;
      m.inputs = {{"ckpt", sample_ckpt}, {"cond", sample_cond}};
      m.outputs = {{"tensor", written.string()}};
      write_manifest(m, fs::path(sample_out) / "manifest.json");
      std::cout << "wrote " << written.string() << "\n";
    } else if (*rd) {
      auto m = start_manifest("render");
      RenderOptions opts{render_in, render_out, std::nullopt};
      if (!render_scene.empty()) opts.scene = render_scene;
      const RenderStats stats = render_joint(opts);
      m.config = {{"in", render_in}, {"out", render_out}, {"scene", render_scene}};
      m.inputs = {{"joint", render_in}};
      m.outputs = {{"dir", render_out}, {"frames", stats.frames}};
      write_manifest(m, fs::path(render_out) / "manifest.json");
      std::cout << "rendered " << stats.frames << " frames to " << render_out << "\n";
    }
  } catch (const StagingError& e) {
    std::cerr << "staging error: " << e.what() << "\n";
    return kExitStaging;
  } catch (const LayoutError& e) {
    std::cerr << "layout error: " << e.what() << "\n";
    return kExitStaging;
  } catch (const PipelineError& e) {
    std::cerr << "pipeline error: " << e.what() << "\n";
    return kExitPipeline;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitPipeline;
  } catch (const ProjectionError& e) {
    std::cerr << "pipeline error: " << e.what() << "\n";
    return kExitPipeline;
  } catch (const GraphError& e) {
    std::cerr << "pipeline error: " << e.what() << "\n";
    return kExitPipeline;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitInput;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return 0;
}
