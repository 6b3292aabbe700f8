#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "aimclr/random.hpp"
#include "aimclr/skeleton.hpp"

namespace aimclr {

enum class Axis { X = 0, Y = 1, Z = 2 };

enum class AugmentKind {
  Shear,
  Crop,
  SpatialFlip,
  TemporalFlip,
  Rotate,
  AxisMask,
  GaussianNoise,
  GaussianBlur,
};

std::string augment_name(AugmentKind kind);

/// Sampling ranges and probabilities for every augmentation.
struct AugmentConfig {
  double shear_amplitude = 0.5;          // factors ~ U[-beta, beta]
  std::size_t crop_padding_ratio = 6;    // pad floor(T / gamma) frames each side
  double spatial_flip_probability = 0.5;
  double temporal_flip_probability = 0.5;
  double rotate_main_max = std::numbers::pi / 6.0;
  double rotate_minor_max = std::numbers::pi / 180.0;
  double axis_mask_probability = 0.5;
  double noise_probability = 1.0;
  double noise_variance = 0.01;
  double blur_probability = 0.5;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;
};

struct AugmentParams {
  // a12, a13, a21, a23, a31, a32 of the unit-diagonal shear matrix.
  std::array<double, 6> shear_factors{};
  std::size_t crop_start = 0;
  bool flip_spatial = false;
  bool flip_temporal = false;
  Axis rotate_axis = Axis::X;
  std::array<double, 3> rotate_angles{};  // about X, Y, Z
  std::optional<Axis> mask_axis;
  bool add_noise = false;
  std::uint64_t noise_seed = 0;
  std::optional<double> blur_sigma;

  // Parameters under which every augmentation is the identity.
  static AugmentParams identity(std::size_t frames, const AugmentConfig& cfg = {});
};

struct Pipeline {
  std::vector<AugmentKind> kinds;
  AugmentConfig config;

  // Shear then crop.
  static Pipeline normal(const AugmentConfig& cfg = {});
  // shear, rotate, spatial flip, axis mask, crop, temporal flip, noise, blur.
  static Pipeline extreme(const AugmentConfig& cfg = {});
};

// Transform cores: pure functions of (x, params).
SkeletonSequence shear(const SkeletonSequence& x, const std::array<double, 6>& factors);
std::size_t crop_padding(std::size_t frames, std::size_t ratio);
SkeletonSequence crop(const SkeletonSequence& x, std::size_t start, std::size_t ratio = 6);
SkeletonSequence spatial_flip(const SkeletonSequence& x, const SkeletonGraph& g, bool apply);
SkeletonSequence temporal_flip(const SkeletonSequence& x, bool apply);
// R = R_X(ax) * R_Y(ay) * R_Z(az); the main axis may turn up to main_max, the
// others up to minor_max.
SkeletonSequence rotate(const SkeletonSequence& x, Axis main_axis,
                        const std::array<double, 3>& angles,
                        double main_max = std::numbers::pi / 6.0,
                        double minor_max = std::numbers::pi / 180.0);
SkeletonSequence axis_mask(const SkeletonSequence& x, std::optional<Axis> axis);
SkeletonSequence gaussian_noise(const SkeletonSequence& x, std::uint64_t seed,
                                double variance = 0.01);
// Normalized 15-tap kernel exp(-t^2 / 2 sigma^2), t in [-7, 7].
std::array<double, 15> blur_kernel(double sigma, bool normalize = true);
SkeletonSequence gaussian_blur(const SkeletonSequence& x, double sigma);

AugmentParams sample_params(const Pipeline& pipeline, std::size_t frames, Rng& rng);
SkeletonSequence apply_pipeline(const SkeletonSequence& x, const Pipeline& pipeline,
                                const AugmentParams& params, const SkeletonGraph& g);

}  // namespace aimclr
