#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "aimclr/augment.hpp"

namespace aimclr {

namespace {

void require_xyz(const SkeletonSequence& x, const char* op) {
  if (x.channels != 3) {
    throw std::invalid_argument(std::string(op) + ": expected 3 coordinate channels, got " +
                                std::to_string(x.channels));
  }
}

// Left-multiplies every coordinate triple by the row-major 3x3 matrix m.
SkeletonSequence transform_points(const SkeletonSequence& x, const std::array<double, 9>& m) {
  SkeletonSequence out = x;
  const std::size_t plane = x.frames * x.joints * x.persons;
  const double* c0 = x.data.data();
  const double* c1 = c0 + plane;
  const double* c2 = c1 + plane;
  for (std::size_t r = 0; r < 3; ++r) {
    double* dst = out.data.data() + r * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      dst[i] = m[r * 3] * c0[i] + m[r * 3 + 1] * c1[i] + m[r * 3 + 2] * c2[i];
    }
  }
  return out;
}

std::array<double, 9> matmul3(const std::array<double, 9>& a, const std::array<double, 9>& b) {
  std::array<double, 9> out{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) out[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
    }
  }
  return out;
}

// Copies frame `src` of x into frame `dst` of out, for every channel/joint/person.
void copy_frame(const SkeletonSequence& x, std::size_t src, SkeletonSequence& out, std::size_t dst) {
  const std::size_t frame = x.joints * x.persons;
  for (std::size_t c = 0; c < x.channels; ++c) {
    std::copy_n(x.data.data() + (c * x.frames + src) * frame, frame,
                out.data.data() + (c * out.frames + dst) * frame);
  }
}

}  // namespace

std::string augment_name(AugmentKind kind) {
  switch (kind) {
    case AugmentKind::Shear: return "shear";
    case AugmentKind::Crop: return "crop";
    case AugmentKind::SpatialFlip: return "spatial_flip";
    case AugmentKind::TemporalFlip: return "temporal_flip";
    case AugmentKind::Rotate: return "rotate";
    case AugmentKind::AxisMask: return "axis_mask";
    case AugmentKind::GaussianNoise: return "gaussian_noise";
    case AugmentKind::GaussianBlur: return "gaussian_blur";
  }
  return "unknown";
}

AugmentParams AugmentParams::identity(std::size_t frames, const AugmentConfig& cfg) {
  AugmentParams p;
  p.crop_start = crop_padding(frames, cfg.crop_padding_ratio);
  return p;
}

Pipeline Pipeline::normal(const AugmentConfig& cfg) {
  return {{AugmentKind::Shear, AugmentKind::Crop}, cfg};
}

Pipeline Pipeline::extreme(const AugmentConfig& cfg) {
  return {{AugmentKind::Shear, AugmentKind::Rotate, AugmentKind::SpatialFlip,
           AugmentKind::AxisMask, AugmentKind::Crop, AugmentKind::TemporalFlip,
           AugmentKind::GaussianNoise, AugmentKind::GaussianBlur},
          cfg};
}

SkeletonSequence shear(const SkeletonSequence& x, const std::array<double, 6>& f) {
  require_xyz(x, "shear");
  return transform_points(x, {1.0, f[0], f[1], f[2], 1.0, f[3], f[4], f[5], 1.0});
}

std::size_t crop_padding(std::size_t frames, std::size_t ratio) {
  if (ratio == 0) throw std::invalid_argument("crop: padding ratio must be positive");
  return frames / ratio;
}

SkeletonSequence crop(const SkeletonSequence& x, std::size_t start, std::size_t ratio) {
  const std::size_t pad = crop_padding(x.frames, ratio);
  if (start > 2 * pad) {
    throw std::invalid_argument("crop: start " + std::to_string(start) + " outside [0, " +
                                std::to_string(2 * pad) + "]");
  }
  SkeletonSequence out = SkeletonSequence::zeros(x.channels, x.frames, x.joints, x.persons);
  out.label = x.label;
  for (std::size_t t = 0; t < x.frames; ++t) {
    // Padded index start + t maps back to an original frame by edge replication.
    const auto padded = static_cast<std::ptrdiff_t>(start + t) - static_cast<std::ptrdiff_t>(pad);
    const auto src = std::clamp<std::ptrdiff_t>(padded, 0, static_cast<std::ptrdiff_t>(x.frames) - 1);
    copy_frame(x, static_cast<std::size_t>(src), out, t);
  }
  return out;
}

SkeletonSequence spatial_flip(const SkeletonSequence& x, const SkeletonGraph& g, bool apply) {
  for (const auto& [l, r] : g.left_right_pairs) {
    if (l >= x.joints || r >= x.joints) {
      throw std::invalid_argument("spatial_flip: pair (" + std::to_string(l) + "," +
                                  std::to_string(r) + ") out of range for " +
                                  std::to_string(x.joints) + " joints");
    }
  }
  if (!apply) return x;
  SkeletonSequence out = x;
  for (const auto& [l, r] : g.left_right_pairs) {
    for (std::size_t c = 0; c < x.channels; ++c) {
      for (std::size_t t = 0; t < x.frames; ++t) {
        for (std::size_t p = 0; p < x.persons; ++p) {
          out.at(c, t, l, p) = x.at(c, t, r, p);
          out.at(c, t, r, p) = x.at(c, t, l, p);
        }
      }
    }
  }
  return out;
}

SkeletonSequence temporal_flip(const SkeletonSequence& x, bool apply) {
  if (!apply) return x;
  SkeletonSequence out = x;
  for (std::size_t t = 0; t < x.frames; ++t) copy_frame(x, x.frames - 1 - t, out, t);
  return out;
}

SkeletonSequence rotate(const SkeletonSequence& x, Axis main_axis,
                        const std::array<double, 3>& angles, double main_max, double minor_max) {
  require_xyz(x, "rotate");
  for (std::size_t a = 0; a < 3; ++a) {
    const double limit = a == static_cast<std::size_t>(main_axis) ? main_max : minor_max;
    if (!(angles[a] >= 0.0 && angles[a] <= limit)) {
      throw std::invalid_argument("rotate: angle " + std::to_string(angles[a]) + " about axis " +
                                  std::to_string(a) + " outside [0, " + std::to_string(limit) +
                                  "]");
    }
  }
  const double cx = std::cos(angles[0]), sx = std::sin(angles[0]);
  const double cy = std::cos(angles[1]), sy = std::sin(angles[1]);
  const double cz = std::cos(angles[2]), sz = std::sin(angles[2]);
  const std::array<double, 9> rx{1, 0, 0, 0, cx, -sx, 0, sx, cx};
  const std::array<double, 9> ry{cy, 0, sy, 0, 1, 0, -sy, 0, cy};
  const std::array<double, 9> rz{cz, -sz, 0, sz, cz, 0, 0, 0, 1};
  return transform_points(x, matmul3(matmul3(rx, ry), rz));
}

SkeletonSequence axis_mask(const SkeletonSequence& x, std::optional<Axis> axis) {
  if (!axis) return x;
  const auto c = static_cast<std::size_t>(*axis);
  if (c >= x.channels) throw std::invalid_argument("axis_mask: axis beyond channel count");
  SkeletonSequence out = x;
  const std::size_t plane = x.frames * x.joints * x.persons;
  std::fill_n(out.data.begin() + static_cast<std::ptrdiff_t>(c * plane), plane, 0.0);
  return out;
}

SkeletonSequence gaussian_noise(const SkeletonSequence& x, std::uint64_t seed, double variance) {
  Rng rng = make_rng(seed);
  std::normal_distribution<double> noise(0.0, std::sqrt(variance));
  SkeletonSequence out = x;
  for (double& v : out.data) v += noise(rng);
  return out;
}

std::array<double, 15> blur_kernel(double sigma, bool normalize) {
  std::array<double, 15> k{};
  double total = 0.0;
  for (int t = -7; t <= 7; ++t) {
    k[static_cast<std::size_t>(t + 7)] = std::exp(-static_cast<double>(t * t) / (2.0 * sigma * sigma));
    total += k[static_cast<std::size_t>(t + 7)];
  }
  if (normalize) {
    for (double& v : k) v /= total;
  }
  return k;
}

SkeletonSequence gaussian_blur(const SkeletonSequence& x, double sigma) {
  if (!(sigma >= 0.1 && sigma <= 2.0)) {
    throw std::invalid_argument("gaussian_blur: sigma " + std::to_string(sigma) +
                                " outside [0.1, 2]");
  }
  const auto kernel = blur_kernel(sigma);
  SkeletonSequence out = x;
  const auto last = static_cast<std::ptrdiff_t>(x.frames) - 1;
  for (std::size_t c = 0; c < x.channels; ++c) {
    for (std::size_t t = 0; t < x.frames; ++t) {
      for (std::size_t v = 0; v < x.joints; ++v) {
        for (std::size_t p = 0; p < x.persons; ++p) {
          double acc = 0.0;
          for (int k = -7; k <= 7; ++k) {
            const auto src = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(t) + k, 0, last);
            acc += kernel[static_cast<std::size_t>(k + 7)] *
                   x.at(c, static_cast<std::size_t>(src), v, p);
          }
          out.at(c, t, v, p) = acc;
        }
      }
    }
  }
  return out;
}

AugmentParams sample_params(const Pipeline& pipeline, std::size_t frames, Rng& rng) {
  const AugmentConfig& cfg = pipeline.config;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto coin = [&](double p) { return unit(rng) < p; };
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto pick_axis = [&]() { return static_cast<Axis>(std::min<int>(2, static_cast<int>(3.0 * unit(rng)))); };

  AugmentParams p = AugmentParams::identity(frames, cfg);
  for (AugmentKind kind : pipeline.kinds) {
    switch (kind) {
      case AugmentKind::Shear:
        for (double& f : p.shear_factors) f = uniform(-cfg.shear_amplitude, cfg.shear_amplitude);
        break;
      case AugmentKind::Crop: {
        const std::size_t pad = crop_padding(frames, cfg.crop_padding_ratio);
        p.crop_start = std::uniform_int_distribution<std::size_t>(0, 2 * pad)(rng);
        break;
      }
      case AugmentKind::SpatialFlip: p.flip_spatial = coin(cfg.spatial_flip_probability); break;
      case AugmentKind::TemporalFlip: p.flip_temporal = coin(cfg.temporal_flip_probability); break;
      case AugmentKind::Rotate:
        p.rotate_axis = pick_axis();
        for (std::size_t a = 0; a < 3; ++a) {
          const bool main = a == static_cast<std::size_t>(p.rotate_axis);
          p.rotate_angles[a] = uniform(0.0, main ? cfg.rotate_main_max : cfg.rotate_minor_max);
        }
        break;
      case AugmentKind::AxisMask: {
        const Axis axis = pick_axis();
        if (coin(cfg.axis_mask_probability)) p.mask_axis = axis;
        break;
      }
      case AugmentKind::GaussianNoise:
        p.add_noise = coin(cfg.noise_probability);
        p.noise_seed = rng();
        break;
      case AugmentKind::GaussianBlur: {
        const double sigma = uniform(cfg.blur_sigma_min, cfg.blur_sigma_max);
        if (coin(cfg.blur_probability)) p.blur_sigma = sigma;
        break;
      }
    }
  }
  return p;
}

SkeletonSequence apply_pipeline(const SkeletonSequence& x, const Pipeline& pipeline,
                                const AugmentParams& params, const SkeletonGraph& g) {
  const AugmentConfig& cfg = pipeline.config;
  SkeletonSequence out = x;
  for (AugmentKind kind : pipeline.kinds) {
    switch (kind) {
      case AugmentKind::Shear: out = shear(out, params.shear_factors); break;
      case AugmentKind::Crop: out = crop(out, params.crop_start, cfg.crop_padding_ratio); break;
      case AugmentKind::SpatialFlip: out = spatial_flip(out, g, params.flip_spatial); break;
      case AugmentKind::TemporalFlip: out = temporal_flip(out, params.flip_temporal); break;
      case AugmentKind::Rotate:
        out = rotate(out, params.rotate_axis, params.rotate_angles, cfg.rotate_main_max,
                     cfg.rotate_minor_max);
        break;
      case AugmentKind::AxisMask: out = axis_mask(out, params.mask_axis); break;
      case AugmentKind::GaussianNoise:
        if (params.add_noise) out = gaussian_noise(out, params.noise_seed, cfg.noise_variance);
        break;
      case AugmentKind::GaussianBlur:
        if (params.blur_sigma) out = gaussian_blur(out, *params.blur_sigma);
        break;
    }
  }
  out.label = x.label;
  return out;
}

}  // namespace aimclr
