#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "aimclr/encoder.hpp"

namespace aimclr {

void ParamSet::add(std::string name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("ParamSet: duplicate name " + name);
  entries_.push_back({std::move(name), std::move(value)});
}

const Tensor& ParamSet::get(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.value;
  }
  throw std::out_of_range("ParamSet: no parameter named " + std::string(name));
}

bool ParamSet::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Entry& e) { return e.name == name; });
}

std::size_t ParamSet::numel() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.numel();
  return n;
}

ParamSet ParamSet::clone(bool requires_grad) const {
  ParamSet out;
  for (const auto& e : entries_) out.add(e.name, e.value.clone(requires_grad));
  return out;
}

void ParamSet::zero_grad() {
  for (auto& e : entries_) e.value.zero_grad();
}

bool ParamSet::congruent(const ParamSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name ||
        entries_[i].value.shape() != other.entries_[i].value.shape()) {
      return false;
    }
  }
  return true;
}

std::vector<double> ParamSet::flat() const {
  std::vector<double> out;
  out.reserve(numel());
  for (const auto& e : entries_) out.insert(out.end(), e.value.data().begin(), e.value.data().end());
  return out;
}

std::size_t EncoderConfig::output_frames(std::size_t frames) const {
  const std::size_t pad = (temporal_kernel - 1) / 2;
  for (std::size_t s : strides) frames = (frames + 2 * pad - temporal_kernel) / s + 1;
  return frames;
}

void EncoderConfig::validate() const {
  if (in_channels == 0 || projection_dim == 0 || temporal_kernel == 0) {
    throw std::invalid_argument("encoder config: dimensions must be at least 1");
  }
  if (widths.empty()) throw std::invalid_argument("encoder config: need at least one block");
  if (strides.size() != widths.size()) {
    throw std::invalid_argument("encoder config: one stride per block required");
  }
  if (temporal_kernel % 2 == 0) throw std::invalid_argument("encoder config: temporal kernel must be odd");
  for (std::size_t w : widths) {
    if (w == 0) throw std::invalid_argument("encoder config: block width must be at least 1");
  }
  for (std::size_t s : strides) {
    if (s == 0) throw std::invalid_argument("encoder config: stride must be at least 1");
  }
}

Tensor normalized_adjacency(const SkeletonGraph& g) {
  const std::size_t V = g.num_joints;
  std::vector<double> a(V * V, 0.0);
  for (std::size_t v = 0; v < V; ++v) a[v * V + v] = 1.0;
  for (const auto& [p, c] : g.edges) {
    a[p * V + c] = 1.0;
    a[c * V + p] = 1.0;
  }
  std::vector<double> inv_sqrt_deg(V, 0.0);
  for (std::size_t i = 0; i < V; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < V; ++j) d += a[i * V + j];
    inv_sqrt_deg[i] = 1.0 / std::sqrt(d);
  }
  for (std::size_t i = 0; i < V; ++i) {
    for (std::size_t j = 0; j < V; ++j) a[i * V + j] *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
  }
  return Tensor::from({V, V}, std::move(a));
}

Encoder::Encoder(EncoderConfig cfg, SkeletonGraph graph)
    : cfg_(std::move(cfg)), graph_(std::move(graph)) {
  cfg_.validate();
  graph_.validate();
  adjacency_ = normalized_adjacency(graph_);
}

ParamSet Encoder::init_params(Rng& rng) const {
  ParamSet params;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  // Kaiming-uniform bound sqrt(6 / fan_in) for ReLU layers, zero biases.
  auto uniform = [&](Shape shape, std::size_t fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = bound * unit(rng);
    return Tensor::from(std::move(shape), std::move(v), true);
  };
  std::size_t in = cfg_.in_channels;
  for (std::size_t b = 0; b < cfg_.widths.size(); ++b) {
    const std::size_t out = cfg_.widths[b];
    const std::string prefix = "encoder.block" + std::to_string(b) + ".";
    params.add(prefix + "spatial_weight", uniform({in, out}, in));
    params.add(prefix + "spatial_bias", Tensor::zeros({out}, true));
    params.add(prefix + "temporal_weight", uniform({cfg_.temporal_kernel, out, out}, cfg_.temporal_kernel * out));
    params.add(prefix + "temporal_bias", Tensor::zeros({out}, true));
    in = out;
  }
  const std::size_t h = cfg_.feature_dim();
  params.add("head.fc1.weight", uniform({h, h}, h));
  params.add("head.fc1.bias", Tensor::zeros({h}, true));
  params.add("head.fc2.weight", uniform({h, cfg_.projection_dim}, h));
  params.add("head.fc2.bias", Tensor::zeros({cfg_.projection_dim}, true));
  return params;
}

Tensor Encoder::pack(const std::vector<const SkeletonSequence*>& batch) const {
  if (batch.empty()) throw std::invalid_argument("encode: empty batch");
  const SkeletonSequence& first = *batch.front();
  const std::size_t C = first.channels, T = first.frames, V = first.joints, P = first.persons;
  if (C != cfg_.in_channels || V != graph_.num_joints) {
    throw std::invalid_argument("encode: sequence dims [" + std::to_string(C) + "x" +
                                std::to_string(T) + "x" + std::to_string(V) +
                                "] do not match encoder (C=" + std::to_string(cfg_.in_channels) +
                                ", V=" + std::to_string(graph_.num_joints) + ")");
  }
  std::vector<double> packed(batch.size() * P * T * V * C);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const SkeletonSequence& x = *batch[b];
    if (!x.same_dims(first)) throw std::invalid_argument("encode: batch sequences differ in shape");
    for (std::size_t p = 0; p < P; ++p) {
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t v = 0; v < V; ++v) {
          for (std::size_t c = 0; c < C; ++c) {
            packed[((((b * P + p) * T + t) * V + v) * C) + c] = x.at(c, t, v, p);
          }
        }
      }
    }
  }
  return Tensor::from({batch.size() * P, T, V, C}, std::move(packed));
}

EncodeOutput Encoder::encode(const ParamSet& params,
                             const std::vector<const SkeletonSequence*>& batch) const {
  Tensor x = pack(batch);
  const std::size_t B = batch.size();
  const std::size_t P = batch.front()->persons;
  const std::size_t V = graph_.num_joints;
  for (std::size_t b = 0; b < cfg_.widths.size(); ++b) {
    const std::string prefix = "encoder.block" + std::to_string(b) + ".";
    const std::size_t N = x.dim(0), T = x.dim(1), Cin = x.dim(3);
    const std::size_t Cout = cfg_.widths[b];
    Tensor y = matmul(reshape(x, {N * T * V, Cin}), params.get(prefix + "spatial_weight"));
    y = add(y, params.get(prefix + "spatial_bias"));
    // Aggregate over joints: [N,T,V,C] -> [V, N*T*C], left-multiply by A.
    y = reshape(permute(reshape(y, {N, T, V, Cout}), {2, 0, 1, 3}), {V, N * T * Cout});
    y = reshape(matmul(adjacency_, y), {V, N, T, Cout});
    y = relu(permute(y, {1, 2, 0, 3}));
    y = temporal_conv(y, params.get(prefix + "temporal_weight"), cfg_.strides[b]);
    x = relu(add(y, params.get(prefix + "temporal_bias")));
  }
  const std::size_t To = x.dim(1), C = x.dim(3);
  Tensor fmap = x;
  if (P > 1) {
    fmap = reshape(mean(reshape(x, {B, P, To * V * C}), 1), {B, To, V, C});
  }
  return {fmap, pool(fmap)};
}

EncodeOutput Encoder::encode(const ParamSet& params, const SkeletonSequence& x) const {
  return encode(params, std::vector<const SkeletonSequence*>{&x});
}

Tensor Encoder::pool(const Tensor& feature_map) const {
  const std::size_t B = feature_map.dim(0), T = feature_map.dim(1), V = feature_map.dim(2),
                    C = feature_map.dim(3);
  return mean(reshape(feature_map, {B, T * V, C}), 1);
}

Tensor Encoder::project(const ParamSet& params, const Tensor& h) const {
  Tensor hidden = relu(add(matmul(h, params.get("head.fc1.weight")), params.get("head.fc1.bias")));
  Tensor z = add(matmul(hidden, params.get("head.fc2.weight")), params.get("head.fc2.bias"));
  return l2_normalize(z, 1);
}

void momentum_update(ParamSet& key, const ParamSet& query, double m) {
  if (!(m >= 0.0 && m < 1.0)) throw std::invalid_argument("momentum_update: m must be in [0, 1)");
  if (!key.congruent(query)) {
    throw std::invalid_argument("momentum_update: key and query parameter sets differ in shape");
  }
  for (std::size_t i = 0; i < key.size(); ++i) {
    auto k = key.entries()[i].value.mutable_data();
    const auto q = query.entries()[i].value.data();
    for (std::size_t j = 0; j < k.size(); ++j) k[j] = m * k[j] + (1.0 - m) * q[j];
  }
}

}  // namespace aimclr
