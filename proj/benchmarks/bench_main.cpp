#include <benchmark/benchmark.h>

#include <random>

#include "pointvid/denoiser.hpp"
#include "pointvid/geomreg.hpp"
#include "pointvid/kdtree.hpp"
#include "pointvid/runtime.hpp"

namespace {

using namespace pointvid;

std::vector<float> gaussian(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

DenoiserConfig joint_config(bool attention) {
  DenoiserConfig cfg;
  cfg.in_channels = 6;
  cfg.use_cross_attention = attention;
  return cfg;
}

void run_forward(benchmark::State& state, const DenoiserConfig& cfg, bool backward) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const VideoDims dims{8, side, side};
  const auto params = init_params(cfg, 1);
  const auto z = gaussian(dims.pixels() * static_cast<std::size_t>(cfg.in_channels), 2);
  const auto cond = gaussian(side * side * 3, 3);
  const auto d_out = gaussian(z.size(), 4);
  for (auto _ : state) {
    DenoiserPass<float> pass(cfg, params, dims, z, cond, 500, backward);
    if (backward) benchmark::DoNotOptimize(pass.backward(d_out));
    benchmark::DoNotOptimize(pass.output().data());
  }
}

void BM_RgbForward(benchmark::State& s) { run_forward(s, DenoiserConfig{}, false); }
void BM_JointForward(benchmark::State& s) { run_forward(s, joint_config(false), false); }
void BM_JointAttnForward(benchmark::State& s) { run_forward(s, joint_config(true), false); }
void BM_JointAttnForwardBackward(benchmark::State& s) { run_forward(s, joint_config(true), true); }
BENCHMARK(BM_RgbForward)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_JointForward)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_JointAttnForward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_JointAttnForwardBackward)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_CrossAttention(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const VideoDims dims{8, side, side};
  const auto cfg = joint_config(true);
  const auto params = init_params(cfg, 1);
  const auto v = gaussian(dims.pixels() * 16, 5);
  const auto p = gaussian(dims.pixels() * 16, 6);
  for (auto _ : state) benchmark::DoNotOptimize(cross_attention_block<float>(cfg, params, dims, v, p));
}
BENCHMARK(BM_CrossAttention)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

std::vector<double> random_points(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n * 3);
  for (auto& x : v) x = u(rng);
  return v;
}

void BM_KdTreeKnn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto raw = random_points(n, 7);
  std::vector<KdTree<3>::Point> pts(n);
  for (std::size_t i = 0; i < n; ++i) pts[i] = {raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]};
  const KdTree<3> tree(pts);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(tree.knn(pts[i % n], 8, i % n));
    ++i;
  }
}
BENCHMARK(BM_KdTreeKnn)->Arg(256)->Arg(4096);

void BM_NeighborGraph(benchmark::State& state) {
  const auto pts = random_points(static_cast<std::size_t>(state.range(0)), 8);
  for (auto _ : state) benchmark::DoNotOptimize(build_neighbor_graph(pts, 8));
}
BENCHMARK(BM_NeighborGraph)->Arg(256)->Arg(1024)->Unit(benchmark::kMicrosecond);

void BM_Losses(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const PointBatch pred(8, n, random_points(8 * n, 9));
  const PointBatch truth(8, n, random_points(8 * n, 10));
  const auto graph = build_neighbor_graph(pred.frame(0), 8);
  const LossWeights w;
  for (auto _ : state) {
    benchmark::DoNotOptimize(recon_loss(pred, truth, w));
    benchmark::DoNotOptimize(rigid_loss(pred, graph));
  }
}
BENCHMARK(BM_Losses)->Arg(256)->Arg(1024)->Unit(benchmark::kMicrosecond);

}  // namespace
int main(int argc, char** argv) {
  pointvid::tune_allocator();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
