#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "aimclr/random.hpp"
#include "aimclr/skeleton.hpp"
#include "aimclr/tensor.hpp"

namespace aimclr {

/// Ordered collection of named parameter tensors (module.block.tensor).
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
  };

  void add(std::string name, Tensor value);
  const Tensor& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t numel() const;

  // Deep copy with every tensor's requires_grad set to `requires_grad`.
  ParamSet clone(bool requires_grad) const;
  void zero_grad();
  bool congruent(const ParamSet& other) const;
  // Flat concatenation of all values, in entry order.
  std::vector<double> flat() const;

 private:
  std::vector<Entry> entries_;
};

struct EncoderConfig {
  std::size_t in_channels = 3;
  // Output width of each spatial-temporal block; the last one is the feature
  // dimension h.
  std::vector<std::size_t> widths{32, 64};
  std::vector<std::size_t> strides{2, 2};
  std::size_t temporal_kernel = 5;
  std::size_t projection_dim = 32;

  std::size_t feature_dim() const { return widths.back(); }
  std::size_t output_frames(std::size_t frames) const;
  void validate() const;
};

/// Symmetrically normalized adjacency D^-1/2 (A + I) D^-1/2 of the skeleton
/// tree, as a constant [V x V] tensor.
Tensor normalized_adjacency(const SkeletonGraph& g);

struct EncodeOutput {
  Tensor feature_map;  // [B, T', V, C'] with persons mean-pooled
  Tensor h;            // [B, C']
};

/// ST-GCN-lite: each block maps channels pointwise, aggregates over the fixed
/// normalized adjacency, applies ReLU, then a strided temporal convolution
/// followed by ReLU. No normalization layers, no learned edge weights.
class Encoder {
 public:
  Encoder(EncoderConfig cfg, SkeletonGraph graph);

  const EncoderConfig& config() const { return cfg_; }
  const SkeletonGraph& graph() const { return graph_; }

  ParamSet init_params(Rng& rng) const;

  // Packs a batch into channels-last [B*P, T, V, C] (persons innermost).
  Tensor pack(const std::vector<const SkeletonSequence*>& batch) const;

  EncodeOutput encode(const ParamSet& params,
                      const std::vector<const SkeletonSequence*>& batch) const;
  EncodeOutput encode(const ParamSet& params, const SkeletonSequence& x) const;

  // Global mean over T' and V: [B, T', V, C'] -> [B, C'].
  Tensor pool(const Tensor& feature_map) const;
  // Two-layer MLP (hidden = h, ReLU) followed by L2 normalization: [B, z].
  Tensor project(const ParamSet& params, const Tensor& h) const;

 private:
  EncoderConfig cfg_;
  SkeletonGraph graph_;
  Tensor adjacency_;
};

/// theta_k <- m * theta_k + (1 - m) * theta_q for every parameter.
void momentum_update(ParamSet& key, const ParamSet& query, double m);

// ---------------------------------------------------------------------------
// Checkpoint container: "ACKP", u32 version, u32 count, then per array
// u32 name length, name bytes, u8 dtype (0 = f32, 1 = f64), u32 rank,
// u32 dims, little-endian values.

enum class StorageType : std::uint8_t { F32 = 0, F64 = 1 };

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_arrays(const std::filesystem::path& path, const std::vector<ParamSet::Entry>& arrays,
                 StorageType type);
std::vector<ParamSet::Entry> load_arrays(const std::filesystem::path& path);
// Copies stored values into `params`; names and shapes must match exactly.
void load_into(const std::filesystem::path& path, ParamSet& params);

}  // namespace aimclr
