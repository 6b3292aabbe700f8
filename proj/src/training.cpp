#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "aimclr/training.hpp"

namespace aimclr {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("config: epochs must be at least 1");
  if (stage_switch_epoch == 0 || stage_switch_epoch > epochs) {
    throw std::invalid_argument("config: stage_switch_epoch must be in [1, epochs]");
  }
  if (batch_size == 0) throw std::invalid_argument("config: batch_size must be at least 1");
  if (!(lr > 0.0)) throw std::invalid_argument("config: lr must be positive");
  if (!(lr_drop_factor > 0.0)) throw std::invalid_argument("config: lr_drop_factor must be positive");
  if (!(sgd_momentum >= 0.0 && sgd_momentum < 1.0)) throw std::invalid_argument("config: sgd_momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("config: weight_decay must be nonnegative");
  if (!(alpha > 0.0)) throw std::invalid_argument("config: alpha must be positive");
  if (!(beta >= 0.0)) throw std::invalid_argument("config: beta must be nonnegative");
  if (!(tau > 0.0)) throw std::invalid_argument("config: tau must be positive");
  if (bank_size == 0) throw std::invalid_argument("config: bank_size must be at least 1");
  if (topk == 0) throw std::invalid_argument("config: topk must be at least 1");
  if (!(keep_margin > 0.0 && keep_margin <= 1.0)) throw std::invalid_argument("config: keep_margin must be in (0, 1]");
  if (!(lambda > 0.0)) throw std::invalid_argument("config: lambda must be positive");
  if (!(key_momentum >= 0.0 && key_momentum < 1.0)) throw std::invalid_argument("config: key_momentum must be in [0, 1)");
  encoder.validate();
}

double TrainConfig::lr_at(std::size_t epoch) const { return epoch >= lr_drop_epoch ? lr * lr_drop_factor : lr; }

int TrainConfig::stage_at(std::size_t epoch) const { return epoch >= stage_switch_epoch ? 2 : 1; }

namespace {

json to_json(const TrainConfig& c) {
  const AugmentConfig& a = c.augment;
  return json{
      {"epochs", c.epochs},
      {"stage_switch_epoch", c.stage_switch_epoch},
      {"batch_size", c.batch_size},
      {"lr", c.lr},
      {"lr_drop_epoch", c.lr_drop_epoch},
      {"lr_drop_factor", c.lr_drop_factor},
      {"sgd_momentum", c.sgd_momentum},
      {"weight_decay", c.weight_decay},
      {"alpha", c.alpha},
      {"beta", c.beta},
      {"tau", c.tau},
      {"bank_size", c.bank_size},
      {"topk", c.topk},
      {"keep_margin", c.keep_margin},
      {"lambda", c.lambda},
      {"key_momentum", c.key_momentum},
      {"seed", c.seed},
      {"stream", stream_name(c.stream)},
      {"use_eadm", c.use_eadm},
      {"use_nnm", c.use_nnm},
      {"encoder",
       {{"in_channels", c.encoder.in_channels},
        {"widths", c.encoder.widths},
        {"strides", c.encoder.strides},
        {"temporal_kernel", c.encoder.temporal_kernel},
        {"projection_dim", c.encoder.projection_dim}}},
      {"augment",
       {{"shear_amplitude", a.shear_amplitude},
        {"crop_padding_ratio", a.crop_padding_ratio},
        {"spatial_flip_probability", a.spatial_flip_probability},
        {"temporal_flip_probability", a.temporal_flip_probability},
        {"rotate_main_max", a.rotate_main_max},
        {"rotate_minor_max", a.rotate_minor_max},
        {"axis_mask_probability", a.axis_mask_probability},
        {"noise_probability", a.noise_probability},
        {"noise_variance", a.noise_variance},
        {"blur_probability", a.blur_probability},
        {"blur_sigma_min", a.blur_sigma_min},
        {"blur_sigma_max", a.blur_sigma_max}}},
  };
}

// Assigns every key of `j` through `fields`; unknown keys are errors.
template <typename Fields>
void read_object(const json& j, const std::string& where, Fields&& fields) {
  if (!j.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!fields(key, value)) throw std::invalid_argument("config: unknown key '" + where + key + "'");
  }
}

EncoderConfig encoder_from_json(const json& j) {
  EncoderConfig e;
  read_object(j, "encoder.", [&](const std::string& k, const json& v) {
    if (k == "in_channels") v.get_to(e.in_channels);
    else if (k == "widths") v.get_to(e.widths);
    else if (k == "strides") v.get_to(e.strides);
    else if (k == "temporal_kernel") v.get_to(e.temporal_kernel);
    else if (k == "projection_dim") v.get_to(e.projection_dim);
    else return false;
    return true;
  });
  return e;
}

TrainConfig from_json(const json& j) {
  TrainConfig c;
  read_object(j, "", [&](const std::string& k, const json& v) {
    if (k == "epochs") v.get_to(c.epochs);
    else if (k == "stage_switch_epoch") v.get_to(c.stage_switch_epoch);
    else if (k == "batch_size") v.get_to(c.batch_size);
    else if (k == "lr") v.get_to(c.lr);
    else if (k == "lr_drop_epoch") v.get_to(c.lr_drop_epoch);
    else if (k == "lr_drop_factor") v.get_to(c.lr_drop_factor);
    else if (k == "sgd_momentum") v.get_to(c.sgd_momentum);
    else if (k == "weight_decay") v.get_to(c.weight_decay);
    else if (k == "alpha") v.get_to(c.alpha);
    else if (k == "beta") v.get_to(c.beta);
    else if (k == "tau") v.get_to(c.tau);
    else if (k == "bank_size") v.get_to(c.bank_size);
    else if (k == "topk") v.get_to(c.topk);
    else if (k == "keep_margin") v.get_to(c.keep_margin);
    else if (k == "lambda") v.get_to(c.lambda);
    else if (k == "key_momentum") v.get_to(c.key_momentum);
    else if (k == "seed") v.get_to(c.seed);
    else if (k == "stream") c.stream = parse_stream(v.get<std::string>());
    else if (k == "use_eadm") v.get_to(c.use_eadm);
    else if (k == "use_nnm") v.get_to(c.use_nnm);
    else if (k == "encoder") c.encoder = encoder_from_json(v);
    else if (k == "augment") {
      AugmentConfig& a = c.augment;
      read_object(v, "augment.", [&](const std::string& ak, const json& av) {
        if (ak == "shear_amplitude") av.get_to(a.shear_amplitude);
        else if (ak == "crop_padding_ratio") av.get_to(a.crop_padding_ratio);
        else if (ak == "spatial_flip_probability") av.get_to(a.spatial_flip_probability);
        else if (ak == "temporal_flip_probability") av.get_to(a.temporal_flip_probability);
        else if (ak == "rotate_main_max") av.get_to(a.rotate_main_max);
        else if (ak == "rotate_minor_max") av.get_to(a.rotate_minor_max);
        else if (ak == "axis_mask_probability") av.get_to(a.axis_mask_probability);
        else if (ak == "noise_probability") av.get_to(a.noise_probability);
        else if (ak == "noise_variance") av.get_to(a.noise_variance);
        else if (ak == "blur_probability") av.get_to(a.blur_probability);
        else if (ak == "blur_sigma_min") av.get_to(a.blur_sigma_min);
        else if (ak == "blur_sigma_max") av.get_to(a.blur_sigma_max);
        else return false;
        return true;
      });
    } else {
      return false;
    }
    return true;
  });
  c.validate();
  return c;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

std::string train_config_json(const TrainConfig& cfg) { return to_json(cfg).dump(2); }

TrainConfig parse_train_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  try {
    return from_json(j);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: wrong value type: ") + e.what());
  }
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

void save_train_config(const std::filesystem::path& path, const TrainConfig& cfg) {
  write_text(path, train_config_json(cfg) + "\n");
}

std::string metrics_line(const StepMetrics& m) {
  json j;
  j["epoch"] = m.epoch;
  j["step"] = m.step;
  j["stage"] = m.stage;
  j[m.stage == 1 ? "L_Info" : "L_N"] = m.contrast;
  j["L_d1"] = m.d1;
  j["L_d2"] = m.d2;
  j["loss"] = m.loss;
  j["lr"] = m.lr;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Optimizer and state

void sgd_update(std::vector<double>& param, const std::vector<double>& grad, std::vector<double>& velocity,
                double lr, double momentum, double weight_decay) {
  if (grad.size() != param.size() || velocity.size() != param.size()) {
    throw std::invalid_argument("sgd_update: param, grad and velocity sizes differ");
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grad[i] + weight_decay * param[i];
    param[i] -= lr * velocity[i];
  }
}

void sgd_update(ParamSet& params, ParamSet& velocity, double lr, double momentum, double weight_decay) {
  if (!params.congruent(velocity)) throw std::invalid_argument("sgd_update: velocity does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params.entries()[i].value;
    auto v = velocity.entries()[i].value.mutable_data();
    auto w = p.mutable_data();
    const bool has = p.has_grad();
    const auto g = has ? p.grad() : std::span<const double>{};
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = momentum * v[j] + (has ? g[j] : 0.0) + weight_decay * w[j];
      w[j] -= lr * v[j];
    }
  }
}

TrainState init_state(const TrainConfig& cfg, const Encoder& encoder) {
  TrainState s(cfg.bank_size, cfg.encoder.projection_dim);
  Rng init = make_rng(cfg.seed, {0x1A17});
  s.query = encoder.init_params(init);
  s.key = s.query.clone(false);
  s.velocity = s.query.clone(false);
  for (auto& e : s.velocity.entries()) {
    auto d = e.value.mutable_data();
    std::fill(d.begin(), d.end(), 0.0);
  }
  Rng bank_rng = make_rng(cfg.seed, {0xBA4C});
  s.bank.fill_random(bank_rng);
  return s;
}

std::size_t worker_count() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("AIMCLR_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) n = std::min(n, static_cast<std::size_t>(v));
  }
  return n;
}

namespace {

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

LossTerms compute_losses(const Tensor& z_hat, const Tensor& z_tilde, const Tensor& z_drop, const Tensor& z,
                         const Tensor& bank, const TrainConfig& cfg, int stage) {
  const bool extreme_branch = z_tilde.defined();
  if (extreme_branch != z_drop.defined()) {
    throw std::invalid_argument("compute_losses: z_tilde and z_drop must both be given or both omitted");
  }
  const Tensor logits_hat = contrast_logits(z_hat, z, bank, cfg.tau);
  LossTerms t;
  if (stage == 2 && cfg.use_nnm) {
    std::vector<std::vector<std::vector<std::size_t>>> sets{mine_neighbors(z_hat, bank, cfg.topk)};
    if (extreme_branch) {
      sets.push_back(mine_neighbors(z_tilde, bank, cfg.topk));
      sets.push_back(mine_neighbors(z_drop, bank, cfg.topk));
    }
    t.contrast = nnm_loss(logits_hat, union_rows(sets));
  } else {
    t.contrast = info_nce(logits_hat);
  }
  t.total = mul_scalar(t.contrast, cfg.alpha);
  if (extreme_branch && cfg.beta > 0.0) {
    const D3MTensors d = d3m_loss(logits_hat, contrast_logits(z_tilde, z, bank, cfg.tau),
                                  contrast_logits(z_drop, z, bank, cfg.tau));
    t.d1 = d.d1;
    t.d2 = d.d2;
    t.total = add(t.total, mul_scalar(d.total, cfg.beta));
  }
  return t;
}

StepMetrics pretrain_step(TrainState& s, const Encoder& encoder, const TrainConfig& cfg,
                          const std::vector<const SkeletonSequence*>& batch) {
  if (batch.empty()) throw std::invalid_argument("pretrain_step: empty batch");
  const std::size_t B = batch.size();
  const bool extreme_branch = cfg.beta > 0.0;
  const std::size_t num_views = extreme_branch ? 3 : 2;
  const Pipeline normal = Pipeline::normal(cfg.augment);
  const Pipeline extreme = Pipeline::extreme(cfg.augment);

  // views[v * B + b]: v = 0 key input x, 1 query input x_hat, 2 extreme input x_tilde.
  std::vector<SkeletonSequence> views(num_views * B);
  parallel_for(B, [&](std::size_t b) {
    for (std::size_t v = 0; v < num_views; ++v) {
      const Pipeline& pipeline = v < 2 ? normal : extreme;
      Rng rng = make_rng(cfg.seed, {s.epoch, s.step, b, v});
      const AugmentParams params = sample_params(pipeline, batch[b]->frames, rng);
      views[v * B + b] = apply_pipeline(*batch[b], pipeline, params, encoder.graph());
    }
  });
  auto view = [&](std::size_t v) {
    std::vector<const SkeletonSequence*> out(B);
    for (std::size_t b = 0; b < B; ++b) out[b] = &views[v * B + b];
    return out;
  };

  StepMetrics m;
  m.epoch = s.epoch;
  m.step = s.step;
  m.stage = cfg.stage_at(s.epoch);
  m.lr = cfg.lr_at(s.epoch);

  Tensor z;
  {
    NoGradGuard no_grad;
    z = encoder.project(s.key, encoder.encode(s.key, view(0)).h).detach();
  }
  const std::size_t dim = z.dim(1);
  for (std::size_t b = 0; b < B; ++b) {
    double norm2 = 0.0;
    for (std::size_t j = 0; j < dim; ++j) norm2 += z.at(b * dim + j) * z.at(b * dim + j);
    if (!std::isfinite(norm2) || norm2 == 0.0) {
      throw TrainingDivergedError("degenerate key embedding for sample " + std::to_string(b) + " at step " +
                                  std::to_string(s.step) + " (epoch " + std::to_string(s.epoch) +
                                  "): squared norm " + fmt(norm2));
    }
  }
  const Tensor bank = s.bank.matrix();

  {
    Tape tape;
    const Tensor z_hat = encoder.project(s.query, encoder.encode(s.query, view(1)).h);

    Tensor z_tilde, z_drop;
    if (extreme_branch) {
      const EncodeOutput out = encoder.encode(s.query, view(2));
      z_tilde = encoder.project(s.query, out.h);
      if (cfg.use_eadm) {
        const Tensor dropped = attention_drop(out.feature_map, cfg.lambda, cfg.keep_margin, &m.drop);
        z_drop = encoder.project(s.query, encoder.pool(dropped));
      } else {
        z_drop = z_tilde;
      }
    }
    const LossTerms terms = compute_losses(z_hat, z_tilde, z_drop, z, bank, cfg, m.stage);
    m.contrast = terms.contrast.item();
    if (terms.d1.defined()) {
      m.d1 = terms.d1.item();
      m.d2 = terms.d2.item();
    }
    const Tensor& loss = terms.total;
    m.loss = loss.item();
    if (!std::isfinite(m.loss)) {
      throw TrainingDivergedError("non-finite loss at step " + std::to_string(s.step) + " (epoch " +
                                  std::to_string(s.epoch) + "): loss=" + fmt(m.loss) +
                                  (m.stage == 1 ? " L_Info=" : " L_N=") + fmt(m.contrast) +
                                  " L_d1=" + fmt(m.d1) + " L_d2=" + fmt(m.d2));
    }
    tape.backward(loss);
  }

  sgd_update(s.query, s.velocity, m.lr, cfg.sgd_momentum, cfg.weight_decay);
  s.query.zero_grad();
  momentum_update(s.key, s.query, cfg.key_momentum);
  s.bank.enqueue(z);
  ++s.step;
  s.history.push_back(m);
  return m;
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, {0x5F1E, epoch});
  // Fisher-Yates with an explicit draw so the order does not depend on the
  // standard library's shuffle implementation.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::vector<SkeletonSequence> prepare_stream(const std::vector<SkeletonSequence>& data, const SkeletonGraph& graph,
                                             Stream stream) {
  std::vector<SkeletonSequence> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].joints != graph.num_joints) {
      throw std::invalid_argument("sequence " + std::to_string(i) + " has " + std::to_string(data[i].joints) +
                                  " joints but the graph has " + std::to_string(graph.num_joints));
    }
    if (!data[i].same_dims(data.front())) {
      throw std::invalid_argument("sequence " + std::to_string(i) + " differs in shape from sequence 0");
    }
    out.push_back(to_stream(data[i], graph, stream));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

std::vector<ParamSet::Entry> prefixed(const std::string& prefix, const ParamSet& p) {
  std::vector<ParamSet::Entry> out;
  for (const auto& e : p.entries()) out.push_back({prefix + e.name, e.value});
  return out;
}

void copy_values(const Tensor& src, Tensor& dst, const std::string& what) {
  if (src.shape() != dst.shape()) {
    throw CheckpointError("state checkpoint: shape mismatch for " + what + ": " + shape_str(src.shape()) +
                          " vs " + shape_str(dst.shape()));
  }
  auto d = dst.mutable_data();
  std::copy(src.data().begin(), src.data().end(), d.begin());
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const TrainConfig& cfg, const SkeletonGraph& graph,
                     const TrainState& s) {
  std::filesystem::create_directories(dir);
  save_arrays(dir / "model.ckpt", s.query.entries(), StorageType::F32);
  std::vector<ParamSet::Entry> state = prefixed("query/", s.query);
  for (auto& e : prefixed("key/", s.key)) state.push_back(std::move(e));
  for (auto& e : prefixed("velocity/", s.velocity)) state.push_back(std::move(e));
  state.push_back({"bank", Tensor::from({s.bank.size(), s.bank.dim()}, s.bank.contents())});
  save_arrays(dir / "state.ckpt", state, StorageType::F64);
  save_graph(dir / "graph.json", graph);
  json meta{{"epoch", s.epoch}, {"step", s.step}, {"config", to_json(cfg)}};
  write_text(dir / "meta.json", meta.dump(2) + "\n");
}

TrainState load_state(const std::filesystem::path& dir, const TrainConfig& cfg, const Encoder& encoder) {
  const json meta = read_json_file(dir / "meta.json");
  TrainState s = init_state(cfg, encoder);
  s.epoch = meta.at("epoch").get<std::size_t>();
  s.step = meta.at("step").get<std::size_t>();
  const auto arrays = load_arrays(dir / "state.ckpt");
  std::size_t used = 0;
  auto fill = [&](const std::string& prefix, ParamSet& p) {
    for (auto& e : p.entries()) {
      const std::string name = prefix + e.name;
      const auto it = std::find_if(arrays.begin(), arrays.end(), [&](const auto& a) { return a.name == name; });
      if (it == arrays.end()) throw CheckpointError((dir / "state.ckpt").string() + ": missing array " + name);
      copy_values(it->value, e.value, name);
      ++used;
    }
  };
  fill("query/", s.query);
  fill("key/", s.key);
  fill("velocity/", s.velocity);
  const auto bank = std::find_if(arrays.begin(), arrays.end(), [](const auto& a) { return a.name == "bank"; });
  if (bank == arrays.end()) throw CheckpointError((dir / "state.ckpt").string() + ": missing array bank");
  if (bank->value.rank() != 2 || bank->value.dim(1) != s.bank.dim()) {
    throw CheckpointError((dir / "state.ckpt").string() + ": bank has shape " + shape_str(bank->value.shape()));
  }
  const auto bank_values = bank->value.data();
  s.bank.restore(std::vector<double>(bank_values.begin(), bank_values.end()));
  if (used + 1 != arrays.size()) throw CheckpointError((dir / "state.ckpt").string() + ": unexpected extra arrays");
  return s;
}

LoadedModel load_model(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw CheckpointError("checkpoint directory not found: " + dir.string());
  const json meta = read_json_file(dir / "meta.json");
  const TrainConfig cfg = from_json(meta.at("config"));
  LoadedModel m;
  m.encoder_config = cfg.encoder;
  m.stream = cfg.stream;
  m.graph = load_graph(dir / "graph.json");
  Encoder encoder(m.encoder_config, m.graph);
  Rng rng = make_rng(0);
  m.params = encoder.init_params(rng);
  load_into(dir / "model.ckpt", m.params);
  return m;
}

// ---------------------------------------------------------------------------
// Loop

PretrainResult run_pretraining(const TrainConfig& cfg, const std::vector<SkeletonSequence>& data,
                               const SkeletonGraph& graph, const std::filesystem::path& out_dir,
                               const std::optional<std::filesystem::path>& resume_from, bool verbose) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("pretraining: dataset is empty");
  if (data.front().channels != cfg.encoder.in_channels) {
    throw std::invalid_argument("pretraining: sequences have " + std::to_string(data.front().channels) +
                                " channels, encoder expects " + std::to_string(cfg.encoder.in_channels));
  }
  const std::vector<SkeletonSequence> seqs = prepare_stream(data, graph, cfg.stream);
  const Encoder encoder(cfg.encoder, graph);
  TrainState state = resume_from ? load_state(*resume_from, cfg, encoder) : init_state(cfg, encoder);

  std::filesystem::create_directories(out_dir);
  PretrainResult result;
  result.metrics_log = out_dir / "metrics.jsonl";
  std::ofstream log(result.metrics_log, resume_from ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write " + result.metrics_log.string());

  const auto t0 = std::chrono::steady_clock::now();
  while (state.epoch < cfg.epochs) {
    const std::vector<std::size_t> order = epoch_order(cfg.seed, state.epoch, seqs.size());
    double epoch_loss = 0.0;
    std::size_t steps = 0;
    DropStats drops;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const SkeletonSequence*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&seqs[order[i]]);
      const StepMetrics m = pretrain_step(state, encoder, cfg, batch);
      log << metrics_line(m) << '\n';
      result.metrics.push_back(m);
      epoch_loss += m.loss;
      drops.samples += m.drop.samples;
      drops.dropped_joints += m.drop.dropped_joints;
      drops.dropped_frames += m.drop.dropped_frames;
      drops.fallbacks += m.drop.fallbacks;
      ++steps;
    }
    log.flush();
    ++state.epoch;
    result.last_checkpoint = out_dir / ("ep" + std::to_string(state.epoch));
    save_checkpoint(result.last_checkpoint, cfg, graph, state);
    if (verbose) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::cerr << "epoch " << state.epoch << "/" << cfg.epochs << " stage " << cfg.stage_at(state.epoch - 1)
                << " loss " << fmt(epoch_loss / static_cast<double>(steps));
      if (drops.samples > 0) {
        std::cerr << " dropped joints/sample " << fmt(static_cast<double>(drops.dropped_joints) / drops.samples)
                  << " frames/sample " << fmt(static_cast<double>(drops.dropped_frames) / drops.samples)
                  << " fallbacks " << drops.fallbacks;
      }
      std::cerr << " (" << fmt(secs) << " s)\n";
    }
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

PretrainResult run_pretraining(const TrainConfig& cfg, const std::filesystem::path& manifest,
                               const std::filesystem::path& graph_path, const std::filesystem::path& out_dir,
                               const std::optional<std::filesystem::path>& resume_from, bool verbose) {
  const DatasetManifest m = load_manifest(manifest);
  const SkeletonGraph graph = load_graph(graph_path);
  return run_pretraining(cfg, load_dataset(m), graph, out_dir, resume_from, verbose);
}

}  // namespace aimclr
