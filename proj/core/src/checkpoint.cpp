#include "pointvid/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include "pointvid/error.hpp"
#include "pointvid/io.hpp"

namespace pointvid {

namespace fs = std::filesystem;

namespace {

TensorF flat(const std::vector<float>& v) { return TensorF({v.size()}, v); }

std::vector<float> read_flat(const fs::path& p, std::size_t size) {
  if (!fs::is_regular_file(p)) throw InputError("checkpoint file " + p.string() + " is missing");
  const TensorF t = read_tensor(p);
  if (t.rank() != 1 || t.dim(0) != size) {
    throw LayoutError(p.string() + " holds " + shape_string(t.dims()) + ", expected [" + std::to_string(size) + "]");
  }
  return t.storage();
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const fs::path& dir) {
  fs::create_directories(dir);
  const auto& s = ckpt.state;
  const nlohmann::json meta = {
      {"format", kCheckpointFormat},
      {"model", config_to_json(s.model.cfg)},
      {"layout", layout_to_json(s.model.params.layout)},
      {"optimizer", optimizer_to_json(s.optimizer.config())},
      {"optimizer_steps", s.optimizer.steps()},
      {"iteration", s.iteration},
      {"train_config", train_config_to_json(ckpt.config)},
      {"weights",
       {{"c0", s.weights.c0},
        {"c1", s.weights.c1},
        {"c2", s.weights.c2},
        {"lambda_diff", s.weights.lambda_diff},
        {"lambda_recon", s.weights.lambda_recon},
        {"lambda_rigid", s.weights.lambda_rigid},
        {"cadence_k", s.weights.cadence_k}}},
      {"video", {{"frames", ckpt.dims.frames}, {"height", ckpt.dims.height}, {"width", ckpt.dims.width}}}};
  write_tensor(flat(s.model.params.values), dir / "params.vpt");
  write_tensor(flat(s.optimizer.first_moment()), dir / "adam_m.vpt");
  if (s.optimizer.config().kind == OptimizerKind::kAdam) {
    write_tensor(flat(s.optimizer.second_moment()), dir / "adam_v.vpt");
  } else {
    fs::remove(dir / "adam_v.vpt");
  }
  // Written last so a directory with layout.json always has matching payloads.
  write_text_atomic(dir / "layout.json", meta.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& dir, const std::optional<DenoiserConfig>& expected) {
  const fs::path meta_path = dir / "layout.json";
  if (!fs::is_regular_file(meta_path)) throw InputError("no checkpoint at " + dir.string() + " (layout.json missing)");
  const auto bytes = read_file(meta_path);
  const auto meta = nlohmann::json::parse(reinterpret_cast<const char*>(bytes.data()),
                                          reinterpret_cast<const char*>(bytes.data()) + bytes.size());
  if (meta.value("format", std::string()) != kCheckpointFormat) {
    throw LayoutError("checkpoint format '" + meta.value("format", std::string("?")) + "' is not " + kCheckpointFormat);
  }
  Checkpoint ck;
  const DenoiserConfig cfg = config_from_json(meta.at("model"));
  const ParamLayout stored = layout_from_json(meta.at("layout"));
  const ParamLayout derived = make_layout(cfg);
  if (!(stored == derived)) {
    throw LayoutError("checkpoint layout does not match its own model config\nstored:  " +
                      layout_to_json(stored).dump() + "\nderived: " + layout_to_json(derived).dump());
  }
  if (expected && !(*expected == cfg)) {
    throw LayoutError("checkpoint model does not match the requested configuration\ncheckpoint: " +
                      config_to_json(cfg).dump() + " " + layout_to_json(stored).dump() +
                      "\nrequested:  " + config_to_json(*expected).dump() + " " +
                      layout_to_json(make_layout(*expected)).dump());
  }
  ck.state.model.cfg = cfg;
  ck.state.model.params.layout = stored;
  ck.state.model.params.values = read_flat(dir / "params.vpt", stored.total);
  const OptimizerConfig ocfg = optimizer_from_json(meta.at("optimizer"));
  ck.state.optimizer = Optimizer(ocfg, stored.total);
  auto m = read_flat(dir / "adam_m.vpt", stored.total);
  std::vector<float> v;
  if (ocfg.kind == OptimizerKind::kAdam) v = read_flat(dir / "adam_v.vpt", stored.total);
  ck.state.optimizer.restore(meta.at("optimizer_steps").get<std::uint64_t>(), std::move(m), std::move(v));
  ck.state.iteration = meta.at("iteration").get<std::int64_t>();
  ck.config = train_config_from_json(meta.at("train_config"));
  const auto& jw = meta.at("weights");
  ck.state.weights =
      LossWeights(jw.at("c0").get<double>(), jw.at("c1").get<double>(), jw.at("c2").get<double>(),
                  jw.at("lambda_diff").get<double>(), jw.at("lambda_recon").get<double>(),
                  jw.at("lambda_rigid").get<double>(), jw.at("cadence_k").get<int>());
  const auto& jv = meta.at("video");
  ck.dims = {jv.at("frames").get<std::size_t>(), jv.at("height").get<std::size_t>(), jv.at("width").get<std::size_t>()};
  return ck;
}

}  // namespace pointvid
