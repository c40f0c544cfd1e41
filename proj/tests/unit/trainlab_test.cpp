#include <gtest/gtest.h>

#include <nlohmann/json.hpp>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "pointvid/checkpoint.hpp"
#include "pointvid/error.hpp"
#include "pointvid/evaluate.hpp"
#include "pointvid/optimizer.hpp"
#include "pointvid/pipeline.hpp"
#include "pointvid/train.hpp"

namespace {

using namespace pointvid;

// Four small prepared scenes shared by the whole suite.
class TrainLab : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new pvtest::TempDir("trainlab");
    GenDataOptions gen;
    gen.scenes = 4;
    gen.frames = 4;
    gen.height = 16;
    gen.width = 16;
    gen.stride = 2;
    gen.seed = 5;
    gen.out = (*dir_) / "raw";
    gen_dataset(gen);
    PrepOptions prep;
    prep.in = gen.out;
    prep.out = (*dir_) / "prep";
    prep_dataset(prep);
    data_ = new std::vector<SceneSample>(load_dataset(prep.out));
  }
  static void TearDownTestSuite() {
    delete data_;
    delete dir_;
  }

  static TrainConfig small_config(Stage stage) {
    TrainConfig cfg;
    cfg.data_dir = ((*dir_) / "prep").string();
    cfg.stage = stage;
    cfg.model.hidden_channels = 8;
    cfg.model.depth = 2;
    cfg.model.time_embed_dim = 8;
    cfg.z0_steps = 3;
    cfg.seed = 17;
    return cfg;
  }

  static TrainState joint_state(const TrainConfig& cfg) {
    const TrainState rgb = initial_state(small_config(Stage::kRgb));
    auto [jcfg, jparams] = augment_channels(rgb.model.cfg, rgb.model.params, true, 3);
    TrainState s;
    s.model = {jcfg, std::move(jparams)};
    s.optimizer = Optimizer(cfg.optimizer, s.model.params.values.size());
    s.weights = cfg.weights;
    return s;
  }

  static pvtest::TempDir* dir_;
  static std::vector<SceneSample>* data_;
};

pvtest::TempDir* TrainLab::dir_ = nullptr;
std::vector<SceneSample>* TrainLab::data_ = nullptr;

TEST(Optimizer, SgdWithoutMomentumIsPlainGradientStep) {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::kSgdMomentum;
  cfg.momentum = 0.0;
  cfg.lr = 0.1;
  Optimizer opt(cfg, 2);
  // f(x) = x0^2 + 3 x1^2
  std::vector<float> x{1.0f, -2.0f};
  for (int i = 0; i < 5; ++i) {
    const std::vector<float> g{2 * x[0], 6 * x[1]};
    const std::vector<float> before = x;
    const double norm = opt.step(x, g);
    EXPECT_NEAR(norm, std::hypot(g[0], g[1]), 1e-6);
    EXPECT_FLOAT_EQ(x[0], before[0] - 0.1f * g[0]);
    EXPECT_FLOAT_EQ(x[1], before[1] - 0.1f * g[1]);
  }
  EXPECT_LT(std::abs(x[0]) + std::abs(x[1]), 0.5);
}

TEST(Optimizer, SgdMomentumAccumulatesVelocity) {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::kSgdMomentum;
  cfg.momentum = 0.5;
  cfg.lr = 1.0;
  Optimizer opt(cfg, 1);
  std::vector<float> x{0.0f};
  const std::vector<float> g{1.0f};
  opt.step(x, g);
  opt.step(x, g);
  EXPECT_FLOAT_EQ(x[0], -(1.0f + 1.5f));
}

TEST(Optimizer, AdamFirstStepHasMagnitudeLr) {
  OptimizerConfig cfg;
  cfg.lr = 0.01;
  Optimizer opt(cfg, 3);
  std::vector<float> x{0.0f, 1.0f, 2.0f};
  opt.step(x, std::vector<float>{5.0f, -0.25f, 1e3f});
  EXPECT_NEAR(x[0], -0.01, 1e-7);
  EXPECT_NEAR(x[1], 1.01, 1e-7);
  EXPECT_NEAR(x[2], 1.99, 1e-6);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Optimizer, AdamConvergesOnQuadratic) {
  OptimizerConfig cfg;
  cfg.lr = 0.05;
  Optimizer opt(cfg, 2);
  std::vector<float> x{3.0f, -4.0f};
  for (int i = 0; i < 2000; ++i) opt.step(x, std::vector<float>{2 * (x[0] - 1), 8 * (x[1] + 0.5f)});
  EXPECT_NEAR(x[0], 1.0, 1e-2);
  EXPECT_NEAR(x[1], -0.5, 1e-2);
}

TEST(Optimizer, ClipScalesGradient) {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::kSgdMomentum;
  cfg.momentum = 0.0;
  cfg.lr = 1.0;
  cfg.clip_norm = 1.0;
  Optimizer opt(cfg, 2);
  std::vector<float> x{0.0f, 0.0f};
  EXPECT_NEAR(opt.step(x, std::vector<float>{3.0f, 4.0f}), 5.0, 1e-12);
  EXPECT_FLOAT_EQ(x[0], -0.6f);
  EXPECT_FLOAT_EQ(x[1], -0.8f);
  EXPECT_THROW(opt.step(x, std::vector<float>{1.0f}), ShapeError);
}

TEST(Lambdas, BalanceToDiffusionLoss) {
  bool warned = true;
  const auto w = lambdas_from_means({0.5, 5.0, 0.05}, LossWeights{}, &warned);
  EXPECT_DOUBLE_EQ(w.lambda_diff, 1.0);
  EXPECT_DOUBLE_EQ(w.lambda_recon, 0.1);
  EXPECT_DOUBLE_EQ(w.lambda_rigid, 10.0);
  EXPECT_FALSE(warned);
  const auto same = lambdas_from_means({0.3, 0.3, 0.3}, LossWeights{});
  EXPECT_EQ(same.lambda_diff, 1.0);
  EXPECT_EQ(same.lambda_recon, 1.0);
  EXPECT_EQ(same.lambda_rigid, 1.0);
  const auto z = lambdas_from_means({0.5, 0.0, 1.0}, LossWeights{}, &warned);
  EXPECT_EQ(z.lambda_recon, 0.0);
  EXPECT_DOUBLE_EQ(z.lambda_rigid, 0.5);
  EXPECT_TRUE(warned);
}

TEST(EvalMetrics, RigidityAndSmoothnessExamples) {
  PointBatch p(3, 2);
  // Two points 1 apart at frame 0, 2 apart at frame 1, 1 apart at frame 2.
  const double xs[3][2] = {{0, 1}, {0, 2}, {0, 1}};
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t i = 0; i < 2; ++i) p.at(t, i, 0) = xs[t][i];
  }
  NeighborGraph g;
  g.pairs = {{0, 1}};
  g.rest_dist = {1.0};
  EXPECT_DOUBLE_EQ(eval_rigidity(p, g), 0.5);
  // Second differences: point 0 is 0, point 1 is 1 - 4 + 1 = -2.
  EXPECT_DOUBLE_EQ(eval_smoothness(p), 1.0);
  EXPECT_EQ(eval_rigidity(p, NeighborGraph{}), 0.0);

  // Static points, then a global translation at constant velocity: both metrics vanish.
  PointBatch moving(4, 2);
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t i = 0; i < 2; ++i) {
      moving.at(t, i, 0) = static_cast<double>(i);
      moving.at(t, i, 1) = 0.25 * static_cast<double>(t);
    }
  }
  EXPECT_NEAR(eval_rigidity(moving, g), 0.0, 1e-15);
  EXPECT_NEAR(eval_smoothness(moving), 0.0, 1e-15);
  PointBatch still(4, 2);
  still.at(0, 1, 0) = still.at(1, 1, 0) = still.at(2, 1, 0) = still.at(3, 1, 0) = 1.0;
  EXPECT_EQ(eval_rigidity(still, g), 0.0);
  EXPECT_EQ(eval_smoothness(still), 0.0);
  EXPECT_EQ(eval_smoothness(PointBatch(2, 2)), 0.0);
}

TEST_F(TrainLab, OracleEvaluationIsNearExact) {
  const auto sched = make_schedule(1000);
  EvalConfig cfg;
  cfg.seed = 3;
  const auto r = evaluate(oracle_predictor(sched), *data_, cfg, sched);
  EXPECT_LT(r.point_mse, 1e-6);
  EXPECT_EQ(r.scenes.size(), data_->size());
  EvalConfig empty_cfg;
  EXPECT_THROW(evaluate(oracle_predictor(sched), {}, empty_cfg, sched), ParameterError);
}

TEST_F(TrainLab, ZeroModelErrorMatchesNoiseVariance) {
  // A zero predictor turns every DDIM step into a rescale, so z0_hat = z0 + sqrt((1 - abar) / abar) eps
  // and the storage-range MSE is (1 - abar) / (4 abar) times a mean of squared standard normals.
  auto cfg = small_config(Stage::kJoint);
  DenoiserModel model{augment_channels(cfg.model, zero_params(cfg.model), true, 0).first, {}};
  model.params = zero_params(model.cfg);
  const auto sched = make_schedule(1000);
  EvalConfig ec;
  ec.t = 100;
  ec.n_samples = 4;
  ec.seed = 9;
  const auto r = evaluate_model(model, *data_, ec, sched);
  const double ab = sched.alpha_bar[100];
  const double expected = (1 - ab) / (4 * ab);
  std::size_t n = 0;
  for (const auto& s : r.scenes) n += s.points;
  n *= 4 * 3 * 4;  // frames, channels, draws
  const double tol = 5.0 * std::sqrt(2.0 / static_cast<double>(n)) * expected * std::sqrt(3.0);
  EXPECT_NEAR(r.point_mse, expected, tol);
}

TEST_F(TrainLab, CadenceAddsRegularizerEveryKthStep) {
  auto cfg = small_config(Stage::kJointReg);
  cfg.weights = LossWeights(1, 1, 1, 1, 1e-3, 1e-3, 5);
  auto state = joint_state(cfg);
  const auto sched = schedule_for(cfg);
  for (int i = 0; i < 11; ++i) {
    const auto rec = train_step(state, *data_, cfg, sched);
    EXPECT_EQ(rec.l_recon.has_value(), i % 5 == 0) << i;
    EXPECT_EQ(rec.l_rigid.has_value(), i % 5 == 0) << i;
  }
  EXPECT_EQ(state.iteration, 11);
}

TEST_F(TrainLab, ZeroLambdasReduceToPlainDiffusion) {
  auto reg_cfg = small_config(Stage::kJointReg);
  reg_cfg.weights = LossWeights(1, 1, 1, 1, 0, 0, 1);
  auto plain_cfg = small_config(Stage::kJoint);
  plain_cfg.weights = reg_cfg.weights;
  auto a = joint_state(reg_cfg);
  auto b = joint_state(plain_cfg);
  const auto sched = schedule_for(reg_cfg);
  for (int i = 0; i < 3; ++i) {
    const auto ra = train_step(a, *data_, reg_cfg, sched);
    const auto rb = train_step(b, *data_, plain_cfg, sched);
    EXPECT_EQ(ra.l_diff, rb.l_diff);
    EXPECT_TRUE(ra.l_recon.has_value());
  }
  EXPECT_EQ(a.model.params.values, b.model.params.values);
}

TEST_F(TrainLab, CheckpointRoundTripAndResume) {
  auto cfg = small_config(Stage::kRgb);
  const auto sched = schedule_for(cfg);
  auto straight = initial_state(cfg);
  std::vector<nlohmann::json> straight_records;
  for (int i = 0; i < 6; ++i) straight_records.push_back(metrics_to_json(train_step(straight, *data_, cfg, sched)));

  auto half = initial_state(cfg);
  std::vector<nlohmann::json> resumed_records;
  for (int i = 0; i < 3; ++i) resumed_records.push_back(metrics_to_json(train_step(half, *data_, cfg, sched)));
  const auto dir = (*dir_) / "ckpt";
  save_checkpoint(Checkpoint{half, cfg, (*data_)[0].dims}, dir);
  auto loaded = load_checkpoint(dir);
  EXPECT_EQ(loaded.state.model.params.values, half.model.params.values);
  EXPECT_EQ(loaded.state.optimizer.first_moment(), half.optimizer.first_moment());
  EXPECT_EQ(loaded.state.optimizer.second_moment(), half.optimizer.second_moment());
  EXPECT_EQ(loaded.state.iteration, 3);
  EXPECT_EQ(loaded.dims.frames, (*data_)[0].dims.frames);
  for (int i = 0; i < 3; ++i) {
    resumed_records.push_back(metrics_to_json(train_step(loaded.state, *data_, loaded.config, sched)));
  }
  EXPECT_EQ(loaded.state.model.params.values, straight.model.params.values);
  EXPECT_EQ(resumed_records, straight_records);

  auto other = cfg.model;
  other.hidden_channels = 16;
  try {
    load_checkpoint(dir, other);
    FAIL() << "expected LayoutError";
  } catch (const LayoutError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("hidden"), std::string::npos) << msg;
  }
  EXPECT_THROW(load_checkpoint((*dir_) / "missing"), InputError);
  // An RGB checkpoint cannot be read as the joint model without augmentation.
  auto joint = cfg.model;
  joint.in_channels = 6;
  joint.use_cross_attention = true;
  EXPECT_THROW(load_checkpoint(dir, joint), LayoutError);
}

TEST_F(TrainLab, RgbStageLossDecreases) {
  auto cfg = small_config(Stage::kRgb);
  cfg.optimizer.lr = 2e-3;
  const auto sched = schedule_for(cfg);
  auto state = initial_state(cfg);
  std::vector<double> losses;
  for (int i = 0; i < 200; ++i) losses.push_back(train_step(state, *data_, cfg, sched).l_diff);
  const double head = std::accumulate(losses.begin(), losses.begin() + 50, 0.0) / 50;
  const double tail = std::accumulate(losses.end() - 50, losses.end(), 0.0) / 50;
  EXPECT_LT(tail, head);
}

TEST_F(TrainLab, JointStageNeedsResume) {
  TrainRunOptions opts;
  opts.config = small_config(Stage::kJoint);
  opts.out = (*dir_) / "joint_noresume";
  EXPECT_THROW(run_training(opts), StagingError);
}

}  // namespace
