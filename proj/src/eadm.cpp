#include <algorithm>
#include <cmath>

#include "aimclr/eadm.hpp"

namespace aimclr {

FeatureMap FeatureMap::zeros(std::size_t c, std::size_t t, std::size_t v) {
  FeatureMap m;
  m.channels = c;
  m.frames = t;
  m.joints = v;
  m.data.assign(c * t * v, 0.0);
  return m;
}

FeatureMap energy(const FeatureMap& x, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("energy: lambda must be positive");
  FeatureMap e = FeatureMap::zeros(x.channels, x.frames, x.joints);
  const std::size_t n = x.frames * x.joints;
  for (std::size_t c = 0; c < x.channels; ++c) {
    const double* src = x.data.data() + c * n;
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += src[i];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= static_cast<double>(n);
    double* dst = e.data.data() + c * n;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = src[i] - mu;
      dst[i] = 4.0 * (var + lambda) / (d * d + 2.0 * var + 2.0 * lambda);
    }
  }
  return e;
}

FeatureMap attention(const FeatureMap& e) {
  FeatureMap a = e;
  for (double& v : a.data) v = 1.0 / (1.0 + std::exp(-1.0 / v));
  return a;
}

namespace {

// 1 where importance <= keep_margin * max, else 0; returns the count of ones.
std::size_t threshold_mask(const std::vector<double>& importance, double keep_margin,
                           std::vector<double>& mask) {
  const double threshold = keep_margin * *std::max_element(importance.begin(), importance.end());
  mask.resize(importance.size());
  std::size_t ones = 0;
  for (std::size_t i = 0; i < importance.size(); ++i) {
    mask[i] = importance[i] > threshold ? 0.0 : 1.0;
    ones += mask[i] != 0.0;
  }
  return ones;
}

void importance(const FeatureMap& att, std::vector<double>& spatial, std::vector<double>& temporal) {
  const std::size_t C = att.channels, T = att.frames, V = att.joints;
  spatial.assign(V, 0.0);
  temporal.assign(T, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t v = 0; v < V; ++v) {
        spatial[v] += att.at(c, t, v);
        temporal[t] += att.at(c, t, v);
      }
    }
  }
  for (double& s : spatial) s /= static_cast<double>(C * T);
  for (double& r : temporal) r /= static_cast<double>(C * V);
}

void check_margin(double keep_margin) {
  if (!(keep_margin > 0.0 && keep_margin <= 1.0)) {
    throw std::invalid_argument("drop: keep_margin must be in (0, 1]");
  }
}

}  // namespace

DropMasks drop_masks(const FeatureMap& att, double keep_margin) {
  check_margin(keep_margin);
  std::vector<double> spatial, temporal;
  importance(att, spatial, temporal);
  DropMasks masks;
  const std::size_t keep_v = threshold_mask(spatial, keep_margin, masks.spatial);
  const std::size_t keep_t = threshold_mask(temporal, keep_margin, masks.temporal);
  if (keep_v == 0) throw DegenerateMaskError("drop: spatial mask removes every joint");
  if (keep_t == 0) throw DegenerateMaskError("drop: temporal mask removes every frame");
  masks.spatial_scale = static_cast<double>(att.joints) / static_cast<double>(keep_v);
  masks.temporal_scale = static_cast<double>(att.frames) / static_cast<double>(keep_t);
  return masks;
}

FeatureMap apply_masks(const FeatureMap& x, const DropMasks& masks) {
  if (masks.spatial.size() != x.joints || masks.temporal.size() != x.frames) {
    throw std::invalid_argument("apply_masks: mask sizes do not match the feature map");
  }
  FeatureMap out = x;
  for (std::size_t c = 0; c < x.channels; ++c) {
    for (std::size_t t = 0; t < x.frames; ++t) {
      for (std::size_t v = 0; v < x.joints; ++v) {
        double& y = out.at(c, t, v);
        y = y * masks.spatial[v];
        y = y * masks.spatial_scale;
        y = y * masks.temporal[t];
        y = y * masks.temporal_scale;
      }
    }
  }
  return out;
}

FeatureMap drop(const FeatureMap& x, const FeatureMap& att, double keep_margin) {
  if (att.channels != x.channels || att.frames != x.frames || att.joints != x.joints) {
    throw std::invalid_argument("drop: attention map shape differs from the feature map");
  }
  return apply_masks(x, drop_masks(att, keep_margin));
}

FeatureMap feature_map_of(const Tensor& fmap, std::size_t b) {
  const std::size_t T = fmap.dim(1), V = fmap.dim(2), C = fmap.dim(3);
  FeatureMap m = FeatureMap::zeros(C, T, V);
  const double* src = fmap.data().data() + b * T * V * C;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t v = 0; v < V; ++v) {
      for (std::size_t c = 0; c < C; ++c) m.at(c, t, v) = src[(t * V + v) * C + c];
    }
  }
  return m;
}

Tensor drop_multiplier(const Tensor& fmap, double lambda, double keep_margin, DropStats* stats) {
  if (fmap.rank() != 4) throw ShapeError("drop_multiplier: expected [B,T,V,C], got " + shape_str(fmap.shape()));
  check_margin(keep_margin);
  const std::size_t B = fmap.dim(0), T = fmap.dim(1), V = fmap.dim(2);
  std::vector<double> mult(B * T * V, 1.0);
  for (std::size_t b = 0; b < B; ++b) {
    const FeatureMap att = attention(energy(feature_map_of(fmap, b), lambda));
    std::vector<double> spatial, temporal;
    importance(att, spatial, temporal);
    DropMasks masks;
    const std::size_t keep_v = threshold_mask(spatial, keep_margin, masks.spatial);
    const std::size_t keep_t = threshold_mask(temporal, keep_margin, masks.temporal);
    if (keep_v == 0) {
      masks.spatial.assign(V, 1.0);
      if (stats) ++stats->fallbacks;
    } else {
      masks.spatial_scale = static_cast<double>(V) / static_cast<double>(keep_v);
    }
    if (keep_t == 0) {
      masks.temporal.assign(T, 1.0);
      if (stats) ++stats->fallbacks;
    } else {
      masks.temporal_scale = static_cast<double>(T) / static_cast<double>(keep_t);
    }
    if (stats) {
      ++stats->samples;
      for (double m : masks.spatial) stats->dropped_joints += m == 0.0;
      for (double m : masks.temporal) stats->dropped_frames += m == 0.0;
    }
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t v = 0; v < V; ++v) {
        mult[(b * T + t) * V + v] =
            masks.spatial[v] * masks.spatial_scale * masks.temporal[t] * masks.temporal_scale;
      }
    }
  }
  return Tensor::from({B, T, V, 1}, std::move(mult));
}

Tensor attention_drop(const Tensor& fmap, double lambda, double keep_margin, DropStats* stats) {
  return masked_mul(fmap, drop_multiplier(fmap, lambda, keep_margin, stats));
}

}  // namespace aimclr
