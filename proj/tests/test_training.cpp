#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "aimclr/training.hpp"

using namespace aimclr;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("aimclr_training_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

SyntheticSet small_data(std::size_t per_class, std::uint64_t seed = 7) {
  SyntheticSpec spec;
  spec.per_class = per_class;
  spec.seed = seed;
  return make_synthetic(spec);
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.stage_switch_epoch = 2;
  cfg.lr_drop_epoch = 2;
  cfg.batch_size = 8;
  cfg.bank_size = 64;
  cfg.encoder.widths = {8, 16};
  cfg.encoder.projection_dim = 8;
  return cfg;
}

Tensor row(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor::from({1, n}, std::move(v));
}

std::vector<double> basis(std::size_t dim, std::size_t i) {
  std::vector<double> v(dim, 0.0);
  v[i] = 1.0;
  return v;
}

double mean_of(const std::vector<double>& v, std::size_t from, std::size_t to) {
  return std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(from), v.begin() + static_cast<std::ptrdiff_t>(to),
                         0.0) /
         static_cast<double>(to - from);
}

}  // namespace

TEST(Sgd, PlainGradientStep) {
  std::vector<double> p{1.0, -2.0, 0.5}, v(3, 0.0);
  const std::vector<double> g{0.3, -0.1, 2.0};
  sgd_update(p, g, v, 0.1, 0.0, 0.0);
  EXPECT_DOUBLE_EQ(p[0], 1.0 - 0.03);
  EXPECT_DOUBLE_EQ(p[1], -2.0 + 0.01);
  EXPECT_DOUBLE_EQ(p[2], 0.5 - 0.2);
  EXPECT_EQ(v, g);
}

TEST(Sgd, VelocityDecaysGeometrically) {
  std::vector<double> p{0.0, 0.0}, v{1.0, -4.0};
  const std::vector<double> g{0.0, 0.0};
  for (int n = 1; n <= 20; ++n) {
    sgd_update(p, g, v, 0.01, 0.9, 0.0);
    EXPECT_NEAR(v[0], std::pow(0.9, n), 1e-14);
    EXPECT_NEAR(v[1], -4.0 * std::pow(0.9, n), 1e-13);
  }
}

TEST(Sgd, WeightDecayShrinks) {
  std::vector<double> p{2.0, -3.0}, v(2, 0.0);
  const std::vector<double> g{0.0, 0.0};
  sgd_update(p, g, v, 0.1, 0.0, 1e-2);
  EXPECT_DOUBLE_EQ(p[0], 2.0 * (1.0 - 0.1 * 1e-2));
  EXPECT_DOUBLE_EQ(p[1], -3.0 * (1.0 - 0.1 * 1e-2));
}

TEST(Sgd, CoupledWeightDecayInsideMomentum) {
  std::vector<double> p{1.0}, v{0.5};
  sgd_update(p, {0.2}, v, 0.1, 0.9, 0.01);
  const double v1 = 0.9 * 0.5 + 0.2 + 0.01 * 1.0;
  EXPECT_DOUBLE_EQ(v[0], v1);
  EXPECT_DOUBLE_EQ(p[0], 1.0 - 0.1 * v1);
}

TEST(Sgd, SizeMismatchThrows) {
  std::vector<double> p{1.0, 2.0}, v{0.0, 0.0};
  EXPECT_THROW(sgd_update(p, {1.0}, v, 0.1, 0.9, 0.0), std::invalid_argument);
}

TEST(Config, DeskDefaults) {
  const TrainConfig cfg;
  EXPECT_EQ(cfg.epochs, 30u);
  EXPECT_EQ(cfg.stage_switch_epoch, 15u);
  EXPECT_EQ(cfg.lr_drop_epoch, 25u);
  EXPECT_DOUBLE_EQ(cfg.lr, 0.1);
  EXPECT_DOUBLE_EQ(cfg.sgd_momentum, 0.9);
  EXPECT_DOUBLE_EQ(cfg.weight_decay, 1e-4);
  EXPECT_DOUBLE_EQ(cfg.alpha, 1.0);
  EXPECT_DOUBLE_EQ(cfg.beta, 1.0);
  EXPECT_EQ(cfg.batch_size, 16u);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, LearningRateSchedule) {
  const TrainConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.lr_at(0), 0.1);
  EXPECT_DOUBLE_EQ(cfg.lr_at(24), 0.1);
  EXPECT_NEAR(cfg.lr_at(25), 0.01, 1e-15);
  EXPECT_NEAR(cfg.lr_at(29), 0.01, 1e-15);
}

TEST(Config, StageBoundary) {
  TrainConfig cfg;
  EXPECT_EQ(cfg.stage_at(14), 1);
  EXPECT_EQ(cfg.stage_at(15), 2);
  cfg.epochs = 1;
  cfg.stage_switch_epoch = 1;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.stage_at(0), 1);
}

TEST(Config, SingleEpochRunNeverReachesStageTwo) {
  const SyntheticSet data = small_data(4);
  TrainConfig cfg = small_config();
  cfg.epochs = 1;
  cfg.stage_switch_epoch = 1;
  const PretrainResult r = run_pretraining(cfg, data.sequences, data.graph, temp_dir("one_epoch"));
  ASSERT_FALSE(r.metrics.empty());
  for (const auto& m : r.metrics) EXPECT_EQ(m.stage, 1);
}

TEST(Config, ValidationRejectsBadValues) {
  const auto rejects = [](auto mutate) {
    TrainConfig cfg;
    mutate(cfg);
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
  };
  rejects([](TrainConfig& c) { c.stage_switch_epoch = 0; });
  rejects([](TrainConfig& c) { c.stage_switch_epoch = 31; });
  rejects([](TrainConfig& c) { c.alpha = 0.0; });
  rejects([](TrainConfig& c) { c.beta = -1.0; });
  rejects([](TrainConfig& c) { c.tau = 0.0; });
  rejects([](TrainConfig& c) { c.key_momentum = 1.0; });
  rejects([](TrainConfig& c) { c.keep_margin = 0.0; });
  rejects([](TrainConfig& c) { c.batch_size = 0; });
}

TEST(Config, JsonRoundTrip) {
  TrainConfig cfg;
  cfg.epochs = 12;
  cfg.stage_switch_epoch = 6;
  cfg.tau = 0.2;
  cfg.keep_margin = 0.8;
  cfg.seed = 1234567890123ULL;
  cfg.stream = Stream::Motion;
  cfg.use_nnm = false;
  cfg.encoder.widths = {5, 7};
  const std::string text = train_config_json(cfg);
  const TrainConfig back = parse_train_config(text);
  EXPECT_EQ(train_config_json(back), text);
  EXPECT_EQ(back.seed, cfg.seed);
  EXPECT_EQ(back.stream, Stream::Motion);
  EXPECT_EQ(back.encoder.widths, cfg.encoder.widths);

  const fs::path dir = temp_dir("config");
  save_train_config(dir / "c.json", cfg);
  EXPECT_EQ(train_config_json(load_train_config(dir / "c.json")), text);
}

TEST(Config, JsonRejectsUnknownAndInvalid) {
  EXPECT_THROW(parse_train_config(R"({"epoch": 3})"), std::invalid_argument);
  EXPECT_THROW(parse_train_config(R"({"encoder": {"width": [3]}})"), std::invalid_argument);
  EXPECT_THROW(parse_train_config(R"({"alpha": 0})"), std::invalid_argument);
  EXPECT_NO_THROW(parse_train_config("{}"));
}

TEST(Metrics, LineCarriesStageSpecificKey) {
  StepMetrics m;
  m.epoch = 2;
  m.step = 9;
  m.stage = 1;
  m.contrast = 1.5;
  m.lr = 0.1;
  const std::string s1 = metrics_line(m);
  EXPECT_NE(s1.find("\"L_Info\""), std::string::npos);
  EXPECT_NE(s1.find("\"L_d1\""), std::string::npos);
  EXPECT_NE(s1.find("\"lr\""), std::string::npos);
  m.stage = 2;
  const std::string s2 = metrics_line(m);
  EXPECT_NE(s2.find("\"L_N\""), std::string::npos);
  EXPECT_EQ(s2.find("\"L_Info\""), std::string::npos);
}

TEST(Losses, StageOneComponentOracle) {
  // q = z = e0 and a bank of the remaining basis vectors: positive logit 1/tau, negatives 0.
  const std::size_t dim = 8, M = 7;
  TrainConfig cfg;
  std::vector<double> bank;
  for (std::size_t i = 1; i <= M; ++i) {
    const auto b = basis(dim, i);
    bank.insert(bank.end(), b.begin(), b.end());
  }
  const Tensor bank_t = Tensor::from({M, dim}, bank);
  const Tensor e0 = row(basis(dim, 0));
  const LossTerms t = compute_losses(e0, e0, e0, e0, bank_t, cfg, 1);

  const double pos = std::exp(1.0 / cfg.tau);
  const double info = -std::log(pos / (pos + static_cast<double>(M)));
  EXPECT_NEAR(t.contrast.item(), info, 1e-12);

  const double p0 = pos / (pos + M), pn = 1.0 / (pos + M);
  const double entropy = -(p0 * std::log(p0) + M * pn * std::log(pn));
  EXPECT_NEAR(t.d1.item(), entropy, 1e-12);
  EXPECT_NEAR(t.d2.item(), entropy, 1e-12);
  EXPECT_NEAR(t.total.item(), cfg.alpha * info + cfg.beta * entropy, 1e-12);
}

TEST(Losses, WeightsScaleComponents) {
  const std::size_t dim = 4;
  const Tensor bank = Tensor::from({2, dim}, {0, 1, 0, 0, 0, 0.6, 0.8, 0});
  const Tensor q = row({0.6, 0.8, 0, 0}), zt = row({0, 0, 0.8, 0.6}), zd = row({1, 0, 0, 0}), z = row({0, 0, 0, 1});
  TrainConfig cfg;
  cfg.alpha = 2.0;
  cfg.beta = 0.5;
  const LossTerms t = compute_losses(q, zt, zd, z, bank, cfg, 1);
  EXPECT_NEAR(t.total.item(), 2.0 * t.contrast.item() + 0.5 * (t.d1.item() + t.d2.item()) / 2.0, 1e-12);
  const LossTerms plain = compute_losses(q, Tensor(), Tensor(), z, bank, cfg, 1);
  EXPECT_FALSE(plain.d1.defined());
  EXPECT_NEAR(plain.total.item(), 2.0 * t.contrast.item(), 1e-12);
  EXPECT_THROW(compute_losses(q, zt, Tensor(), z, bank, cfg, 1), std::invalid_argument);
}

TEST(Losses, StageTwoUsesMinedNeighbors) {
  const std::size_t dim = 3;
  const Tensor bank = Tensor::from({3, dim}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Tensor q = row({0.8, 0.6, 0}), zt = row({0, 0.6, 0.8}), zd = row({0.6, 0.8, 0}), z = row({0.6, 0, 0.8});
  TrainConfig cfg;
  const LossTerms t = compute_losses(q, zt, zd, z, bank, cfg, 2);
  // Top-1 neighbors: q -> 0, z_tilde -> 2, z_drop -> 1.
  const Tensor logits = contrast_logits(q, z, bank, cfg.tau);
  EXPECT_NEAR(t.contrast.item(), nnm_loss(logits, {{0, 1, 2}}).item(), 1e-12);
  EXPECT_LT(t.contrast.item(), info_nce(logits).item());

  cfg.use_nnm = false;
  EXPECT_NEAR(compute_losses(q, zt, zd, z, bank, cfg, 2).contrast.item(), info_nce(logits).item(), 1e-12);
}

class StepTest : public ::testing::Test {
 protected:
  void SetUp() override {
    data = small_data(4);
    cfg = small_config();
    seqs = prepare_stream(data.sequences, data.graph, cfg.stream);
  }
  std::vector<const SkeletonSequence*> batch(std::size_t n) {
    std::vector<const SkeletonSequence*> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(&seqs[i * 3 % seqs.size()]);
    return out;
  }
  SyntheticSet data;
  TrainConfig cfg;
  std::vector<SkeletonSequence> seqs;
};

TEST_F(StepTest, KeyFollowsMomentumOrdering) {
  const Encoder enc(cfg.encoder, data.graph);
  TrainState s = init_state(cfg, enc);
  for (int i = 0; i < 3; ++i) {
    const ParamSet key_before = s.key.clone(false);
    pretrain_step(s, enc, cfg, batch(4));
    const double m = cfg.key_momentum;
    for (std::size_t e = 0; e < s.key.size(); ++e) {
      const auto k0 = key_before.entries()[e].value.data();
      const auto q1 = s.query.entries()[e].value.data();
      const auto k1 = s.key.entries()[e].value.data();
      for (std::size_t j = 0; j < k1.size(); ++j) ASSERT_EQ(k1[j], m * k0[j] + (1.0 - m) * q1[j]);
    }
  }
}

TEST_F(StepTest, GradientsNeverTouchKeyOrBank) {
  const Encoder enc(cfg.encoder, data.graph);
  TrainState s = init_state(cfg, enc);
  const std::vector<double> bank_before = s.bank.contents();
  const std::size_t B = 4, D = s.bank.dim();
  pretrain_step(s, enc, cfg, batch(B));
  for (const auto& e : s.key.entries()) {
    EXPECT_FALSE(e.value.requires_grad()) << e.name;
    EXPECT_FALSE(e.value.has_grad()) << e.name;
  }
  const std::vector<double> bank_after = s.bank.contents();
  ASSERT_EQ(bank_after.size(), bank_before.size());
  // FIFO: the oldest B entries leave, every other entry is unchanged bit for bit.
  for (std::size_t i = 0; i + B * D < bank_before.size(); ++i) ASSERT_EQ(bank_after[i], bank_before[i + B * D]);
}

TEST_F(StepTest, QueryMovesAndStepAdvances) {
  const Encoder enc(cfg.encoder, data.graph);
  TrainState s = init_state(cfg, enc);
  const std::vector<double> before = s.query.flat();
  const StepMetrics m = pretrain_step(s, enc, cfg, batch(4));
  EXPECT_NE(s.query.flat(), before);
  EXPECT_EQ(m.step, 0u);
  EXPECT_EQ(s.step, 1u);
  EXPECT_EQ(s.history.size(), 1u);
  EXPECT_TRUE(std::isfinite(m.loss));
  EXPECT_NEAR(m.loss, cfg.alpha * m.contrast + cfg.beta * (m.d1 + m.d2) / 2.0, 1e-12);
  EXPECT_EQ(m.drop.samples, 4u);
  EXPECT_THROW(pretrain_step(s, enc, cfg, {}), std::invalid_argument);
}

TEST_F(StepTest, IdenticalStateGivesIdenticalSteps) {
  const Encoder enc(cfg.encoder, data.graph);
  TrainState a = init_state(cfg, enc), b = init_state(cfg, enc);
  for (int i = 0; i < 3; ++i) {
    const StepMetrics ma = pretrain_step(a, enc, cfg, batch(4));
    const StepMetrics mb = pretrain_step(b, enc, cfg, batch(4));
    ASSERT_EQ(ma.loss, mb.loss);
  }
  EXPECT_EQ(a.query.flat(), b.query.flat());
  EXPECT_EQ(a.bank.contents(), b.bank.contents());
}

TEST_F(StepTest, NonFiniteLossAbortsWithStepIndex) {
  const Encoder enc(cfg.encoder, data.graph);
  TrainState s = init_state(cfg, enc);
  pretrain_step(s, enc, cfg, batch(2));
  for (auto& e : s.query.entries()) {
    if (e.name == "head.fc2.bias") std::fill(e.value.mutable_data().begin(), e.value.mutable_data().end(), NAN);
  }
  const std::vector<double> bank_before = s.bank.contents();
  try {
    pretrain_step(s, enc, cfg, batch(2));
    FAIL() << "expected TrainingDivergedError";
  } catch (const TrainingDivergedError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("step 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("L_Info"), std::string::npos) << msg;
    EXPECT_NE(msg.find("L_d1"), std::string::npos) << msg;
  }
  EXPECT_EQ(s.step, 1u);
  EXPECT_EQ(s.bank.contents(), bank_before);
}

TEST_F(StepTest, DegenerateKeyEmbeddingAborts) {
  const Encoder enc(cfg.encoder, data.graph);
  TrainState s = init_state(cfg, enc);
  SkeletonSequence bad = seqs[0];
  for (double& d : bad.data) d = 1e300;
  EXPECT_THROW(pretrain_step(s, enc, cfg, {&bad}), TrainingDivergedError);
  EXPECT_EQ(s.step, 0u);
}

TEST_F(StepTest, BatchOfOneUnderFiftyMilliseconds) {
  // Default configuration on a [3 x 32 x 9 x 1] sample.
  const TrainConfig def;
  const Encoder enc(def.encoder, data.graph);
  TrainState s = init_state(def, enc);
  const std::vector<const SkeletonSequence*> one{&seqs[0]};
  for (int i = 0; i < 3; ++i) pretrain_step(s, enc, def, one);
  std::vector<double> ms;
  for (int i = 0; i < 15; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    pretrain_step(s, enc, def, one);
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  std::nth_element(ms.begin(), ms.begin() + 7, ms.end());
  EXPECT_LT(ms[7], 50.0) << "median step time " << ms[7] << " ms";
}

TEST(EpochOrder, PermutationAndDeterministic) {
  const auto a = epoch_order(7, 0, 100);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> iota(100);
  std::iota(iota.begin(), iota.end(), 0);
  EXPECT_EQ(sorted, iota);
  EXPECT_EQ(a, epoch_order(7, 0, 100));
  EXPECT_NE(a, epoch_order(7, 1, 100));
  EXPECT_NE(a, epoch_order(8, 0, 100));
}

TEST(PrepareStream, RejectsMismatch) {
  const SyntheticSet data = small_data(2);
  EXPECT_THROW(prepare_stream(data.sequences, make_tree_graph(5), Stream::Joint), std::invalid_argument);
  auto mixed = data.sequences;
  mixed[1] = SkeletonSequence::zeros(3, 16, 9, 1);
  EXPECT_THROW(prepare_stream(mixed, data.graph, Stream::Joint), std::invalid_argument);
  const auto bone = prepare_stream(data.sequences, data.graph, Stream::Bone);
  ASSERT_EQ(bone.size(), data.sequences.size());
  EXPECT_EQ(bone[0].data, to_stream(data.sequences[0], data.graph, Stream::Bone).data);
}

TEST(RunPretraining, RejectsChannelMismatchAndEmptyData) {
  const SyntheticSet data = small_data(2);
  TrainConfig cfg = small_config();
  cfg.encoder.in_channels = 2;
  EXPECT_THROW(run_pretraining(cfg, data.sequences, data.graph, temp_dir("bad")), std::invalid_argument);
  EXPECT_THROW(run_pretraining(small_config(), {}, data.graph, temp_dir("bad")), std::invalid_argument);
  EXPECT_ANY_THROW(run_pretraining(small_config(), temp_dir("bad") / "missing.json", temp_dir("bad") / "g.json",
                                   temp_dir("bad2")));
}

TEST(RunPretraining, WritesPerEpochCheckpointsAndLog) {
  const SyntheticSet data = small_data(4);
  const TrainConfig cfg = small_config();
  const fs::path out = temp_dir("layout");
  const PretrainResult r = run_pretraining(cfg, data.sequences, data.graph, out);
  for (int e = 1; e <= 3; ++e) {
    const fs::path ep = out / ("ep" + std::to_string(e));
    for (const char* f : {"model.ckpt", "state.ckpt", "graph.json", "meta.json"}) EXPECT_TRUE(fs::exists(ep / f)) << f;
  }
  EXPECT_EQ(r.last_checkpoint, out / "ep3");
  const auto lines = lines_of(r.metrics_log);
  ASSERT_EQ(lines.size(), r.metrics.size());
  EXPECT_EQ(r.metrics.size(), 3u * 2u);  // 16 samples, batch 8
  for (const auto& m : r.metrics) {
    EXPECT_EQ(m.stage, cfg.stage_at(m.epoch));
    EXPECT_DOUBLE_EQ(m.lr, cfg.lr_at(m.epoch));
  }

  const LoadedModel model = load_model(r.last_checkpoint);
  const Encoder enc(cfg.encoder, data.graph);
  const TrainState s = load_state(r.last_checkpoint, cfg, enc);
  const auto full = s.query.flat(), stored = model.params.flat();
  ASSERT_EQ(full.size(), stored.size());
  for (std::size_t i = 0; i < full.size(); ++i) ASSERT_EQ(stored[i], static_cast<double>(static_cast<float>(full[i])));
  EXPECT_EQ(s.epoch, 3u);
  EXPECT_EQ(s.step, 6u);
}

TEST(RunPretraining, ResumeMatchesUninterruptedRun) {
  const SyntheticSet data = small_data(4);
  const TrainConfig cfg = small_config();
  const fs::path full = temp_dir("resume_full"), part = temp_dir("resume_part");
  const PretrainResult a = run_pretraining(cfg, data.sequences, data.graph, full);

  TrainConfig first = cfg;
  first.epochs = 2;
  run_pretraining(first, data.sequences, data.graph, part);
  EXPECT_EQ(slurp(part / "metrics.jsonl"),
            slurp(full / "metrics.jsonl").substr(0, slurp(part / "metrics.jsonl").size()));
  const fs::path resumed = temp_dir("resume_cont");
  const PretrainResult b = run_pretraining(cfg, data.sequences, data.graph, resumed, part / "ep2");
  ASSERT_EQ(b.metrics.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(b.metrics[i].loss, a.metrics[4 + i].loss);
    EXPECT_EQ(b.metrics[i].step, a.metrics[4 + i].step);
  }
  EXPECT_EQ(slurp(resumed / "ep3" / "state.ckpt"), slurp(full / "ep3" / "state.ckpt"));
}

TEST(RunPretraining, DeterministicAcrossRunsAndWorkerCounts) {
  const SyntheticSet data = small_data(4);
  const TrainConfig cfg = small_config();
  const fs::path a = temp_dir("det_a"), b = temp_dir("det_b"), c = temp_dir("det_c");
  ::setenv("AIMCLR_THREADS", "1", 1);
  run_pretraining(cfg, data.sequences, data.graph, a);
  run_pretraining(cfg, data.sequences, data.graph, b);
  ::setenv("AIMCLR_THREADS", "4", 1);
  run_pretraining(cfg, data.sequences, data.graph, c);
  ::unsetenv("AIMCLR_THREADS");
  const std::string log = slurp(a / "metrics.jsonl");
  ASSERT_FALSE(log.empty());
  EXPECT_EQ(log, slurp(b / "metrics.jsonl"));
  EXPECT_EQ(log, slurp(c / "metrics.jsonl"));
}

TEST(RunPretraining, SoakLossStaysFinite) {
  // Default configuration, 272 samples at batch 16: 17 steps per epoch, 510 steps over 30 epochs.
  const SyntheticSet data = small_data(68);
  const TrainConfig cfg;
  const PretrainResult r = run_pretraining(cfg, data.sequences, data.graph, temp_dir("soak"));
  ASSERT_GE(r.metrics.size(), 500u);
  for (const auto& m : r.metrics) {
    ASSERT_TRUE(std::isfinite(m.loss)) << "step " << m.step;
    ASSERT_TRUE(std::isfinite(m.contrast) && std::isfinite(m.d1) && std::isfinite(m.d2)) << "step " << m.step;
  }
}

TEST(RunPretraining, StageOneLossDecreases) {
  // The stage-1 half of the default schedule on the 256-sample desk set.
  const SyntheticSet data = small_data(64);
  TrainConfig cfg;
  cfg.epochs = cfg.stage_switch_epoch;
  const PretrainResult r = run_pretraining(cfg, data.sequences, data.graph, temp_dir("progress"));
  std::vector<double> epoch_loss(cfg.epochs, 0.0);
  std::vector<double> steps(cfg.epochs, 0.0);
  for (const auto& m : r.metrics) {
    ASSERT_EQ(m.stage, 1);
    epoch_loss[m.epoch] += m.loss;
    steps[m.epoch] += 1.0;
  }
  for (std::size_t e = 0; e < cfg.epochs; ++e) epoch_loss[e] /= steps[e];
  const double first = mean_of(epoch_loss, 0, 5), last = mean_of(epoch_loss, cfg.epochs - 5, cfg.epochs);
  EXPECT_LT(last, first) << "first five " << first << ", last five " << last;
}
