#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "aimclr/augment.hpp"
#include "aimclr/contrastive.hpp"
#include "aimclr/eadm.hpp"
#include "aimclr/encoder.hpp"
#include "aimclr/skeleton.hpp"

namespace aimclr {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t stage_switch_epoch = 15;  // stage 2 runs for epoch indices >= this
  std::size_t batch_size = 16;
  double lr = 0.1;
  std::size_t lr_drop_epoch = 25;
  double lr_drop_factor = 0.1;
  double sgd_momentum = 0.9;
  double weight_decay = 1e-4;
  double alpha = 1.0;
  double beta = 1.0;
  double tau = 0.1;
  std::size_t bank_size = 1024;
  std::size_t topk = 1;
  double keep_margin = 0.99;
  double lambda = 1e-4;
  double key_momentum = 0.99;
  std::uint64_t seed = 7;
  Stream stream = Stream::Joint;
  bool use_eadm = true;
  bool use_nnm = true;
  EncoderConfig encoder;
  AugmentConfig augment;

  void validate() const;
  double lr_at(std::size_t epoch) const;
  int stage_at(std::size_t epoch) const;
};

TrainConfig load_train_config(const std::filesystem::path& path);
void save_train_config(const std::filesystem::path& path, const TrainConfig& cfg);
std::string train_config_json(const TrainConfig& cfg);
TrainConfig parse_train_config(const std::string& json_text);

struct StepMetrics {
  std::size_t epoch = 0;
  std::size_t step = 0;  // global, counted from 0
  int stage = 1;
  double loss = 0.0;
  double contrast = 0.0;  // L_Info in stage 1, L_N in stage 2
  double d1 = 0.0;
  double d2 = 0.0;
  double lr = 0.0;
  DropStats drop;
};

// One JSON object per line: {epoch, step, L_Info | L_N, L_d1, L_d2, lr, loss}.
std::string metrics_line(const StepMetrics& m);

struct TrainState {
  std::size_t epoch = 0;  // next epoch to run
  std::size_t step = 0;   // steps taken so far
  ParamSet query;
  ParamSet key;
  ParamSet velocity;
  MemoryBank bank;
  std::vector<StepMetrics> history;

  TrainState(std::size_t bank_size, std::size_t dim) : bank(bank_size, dim) {}
};

class TrainingDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Query parameters from the seed, key = copy of query, zero velocities and a
/// bank filled with random unit vectors.
TrainState init_state(const TrainConfig& cfg, const Encoder& encoder);

/// v <- momentum * v + grad + weight_decay * param; param <- param - lr * v.
void sgd_update(std::vector<double>& param, const std::vector<double>& grad, std::vector<double>& velocity,
                double lr, double momentum, double weight_decay);
// Uses each parameter's accumulated gradient (zero when none was recorded).
void sgd_update(ParamSet& params, ParamSet& velocity, double lr, double momentum, double weight_decay);

// Worker count for augmentation: AIMCLR_THREADS if set, else hardware threads.
std::size_t worker_count();

struct LossTerms {
  Tensor contrast;  // L_Info (stage 1) or L_N (stage 2 with mining enabled)
  Tensor d1;        // undefined when the extreme branch is off
  Tensor d2;
  Tensor total;     // alpha * contrast + beta * (d1 + d2) / 2
};

/// Loss assembly from query embeddings, detached keys z [B, d] and the bank
/// snapshot [M, d]. Pass undefined z_tilde/z_drop to skip the extreme branch.
/// In stage 2 with mining, N+ is the union of the top-k bank neighbors of
/// z_hat, z_tilde and z_drop.
LossTerms compute_losses(const Tensor& z_hat, const Tensor& z_tilde, const Tensor& z_drop, const Tensor& z,
                         const Tensor& bank, const TrainConfig& cfg, int stage);

/// One optimization step on already stream-converted sequences. Augmentation
/// draws come from (seed, epoch, step, sample, view).
StepMetrics pretrain_step(TrainState& state, const Encoder& encoder, const TrainConfig& cfg,
                          const std::vector<const SkeletonSequence*>& batch);

/// Per-epoch sample order: a seeded permutation of [0, n).
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n);

struct PretrainResult {
  std::filesystem::path last_checkpoint;
  std::filesystem::path metrics_log;
  std::vector<StepMetrics> metrics;
  double seconds = 0.0;
};

/// Runs epochs [state.epoch, cfg.epochs). Writes out_dir/metrics.jsonl and,
/// after every epoch e (1-based), out_dir/ep<e>/ holding model.ckpt (query
/// parameters, f32), state.ckpt (exact f64 training state) and meta.json.
/// With `resume_from`, training continues from that checkpoint directory.
PretrainResult run_pretraining(const TrainConfig& cfg, const std::vector<SkeletonSequence>& data,
                               const SkeletonGraph& graph, const std::filesystem::path& out_dir,
                               const std::optional<std::filesystem::path>& resume_from = std::nullopt,
                               bool verbose = false);

PretrainResult run_pretraining(const TrainConfig& cfg, const std::filesystem::path& manifest,
                               const std::filesystem::path& graph, const std::filesystem::path& out_dir,
                               const std::optional<std::filesystem::path>& resume_from = std::nullopt,
                               bool verbose = false);

// Converts every sequence to the configured stream; checks dims against the graph.
std::vector<SkeletonSequence> prepare_stream(const std::vector<SkeletonSequence>& data,
                                             const SkeletonGraph& graph, Stream stream);

void save_checkpoint(const std::filesystem::path& dir, const TrainConfig& cfg, const SkeletonGraph& graph,
                     const TrainState& state);
TrainState load_state(const std::filesystem::path& dir, const TrainConfig& cfg, const Encoder& encoder);

/// A trained model as stored in a checkpoint directory.
struct LoadedModel {
  EncoderConfig encoder_config;
  SkeletonGraph graph;
  Stream stream = Stream::Joint;
  ParamSet params;
};

LoadedModel load_model(const std::filesystem::path& ckpt_dir);

}  // namespace aimclr
