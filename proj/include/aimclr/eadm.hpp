#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "aimclr/tensor.hpp"

namespace aimclr {

/// Single-sample feature map laid out [C x T x V].
struct FeatureMap {
  std::size_t channels = 0;
  std::size_t frames = 0;
  std::size_t joints = 0;
  std::vector<double> data;

  static FeatureMap zeros(std::size_t c, std::size_t t, std::size_t v);
  double& at(std::size_t c, std::size_t t, std::size_t v) { return data[(c * frames + t) * joints + v]; }
  double at(std::size_t c, std::size_t t, std::size_t v) const {
    return data[(c * frames + t) * joints + v];
  }
};

class DegenerateMaskError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-neuron minimal energy
///   e = 4 (var + lambda) / ((x - mean)^2 + 2 var + 2 lambda)
/// with mean and population variance taken over each channel's T*V neurons.
FeatureMap energy(const FeatureMap& x, double lambda);

/// sigmoid(1 / e) elementwise.
FeatureMap attention(const FeatureMap& energy);

struct DropMasks {
  std::vector<double> spatial;   // [V], 1 = keep
  std::vector<double> temporal;  // [T]
  double spatial_scale = 1.0;    // count / count_ones
  double temporal_scale = 1.0;
};

/// Spatial importance is the attention mean over (c, t) per joint, temporal
/// importance the mean over (c, v) per frame. A location is dropped when its
/// importance is strictly above keep_margin times the maximum importance.
/// Throws DegenerateMaskError when a mask would drop every location.
DropMasks drop_masks(const FeatureMap& attention, double keep_margin);

/// Applies the spatial mask, rescales by count/count_ones, then does the same
/// with the temporal mask.
FeatureMap apply_masks(const FeatureMap& x, const DropMasks& masks);
FeatureMap drop(const FeatureMap& x, const FeatureMap& attention, double keep_margin);

struct DropStats {
  std::size_t samples = 0;
  std::size_t dropped_joints = 0;
  std::size_t dropped_frames = 0;
  std::size_t fallbacks = 0;  // masks replaced by identity because they dropped everything
};

/// Batched drop for channels-last feature maps [B, T, V, C]. Returns the
/// constant multiplier [B, T, V, 1] (mask times rescale); a mask that would
/// drop everything is replaced by all-ones.
Tensor drop_multiplier(const Tensor& feature_map, double lambda, double keep_margin,
                       DropStats* stats = nullptr);

/// feature_map * drop_multiplier(feature_map); the multiplier is a constant,
/// so gradients see the same mask-and-scale.
Tensor attention_drop(const Tensor& feature_map, double lambda, double keep_margin,
                      DropStats* stats = nullptr);

// Extracts sample b of a channels-last [B, T, V, C] tensor as a [C x T x V] map.
FeatureMap feature_map_of(const Tensor& feature_map, std::size_t b);

}  // namespace aimclr
