#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "aimclr/random.hpp"
#include "aimclr/skeleton.hpp"

namespace aimclr {

namespace {

// Rest pose: each bone is a fixed vector of length ~0.4 from its parent.
std::vector<std::array<double, 3>> rest_pose(const SkeletonGraph& g) {
  std::mt19937_64 rng(0x5EED);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::array<double, 3>> pos(g.num_joints, {0.0, 0.0, 0.0});
  // Edges of a validated tree may be listed in any order; relax until stable.
  std::vector<bool> placed(g.num_joints, false);
  placed[g.center] = true;
  std::vector<std::array<double, 3>> bone(g.edges.size());
  for (auto& b : bone) {
    double n = 0.0;
    for (auto& c : b) {
      c = gauss(rng);
      n += c * c;
    }
    for (auto& c : b) c *= 0.4 / std::sqrt(n);
  }
  for (std::size_t pass = 0; pass < g.num_joints; ++pass) {
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
      const auto [p, c] = g.edges[e];
      if (placed[p] && !placed[c]) {
        for (int k = 0; k < 3; ++k) pos[c][k] = pos[p][k] + bone[e][k];
        placed[c] = true;
      }
    }
  }
  return pos;
}

struct Motif {
  double frequency = 1.0;
  std::vector<double> amplitude;  // [V * 3]
  std::vector<double> phase;      // [V * 3]
};

}  // namespace

SyntheticSet make_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw std::invalid_argument("make_synthetic: need at least 2 classes");
  if (spec.frames == 0 || spec.joints == 0 || spec.persons == 0) {
    throw std::invalid_argument("make_synthetic: dims must be positive");
  }
  SyntheticSet set;
  set.graph = make_tree_graph(spec.joints);
  set.num_classes = spec.classes;
  const std::size_t V = spec.joints, T = spec.frames, P = spec.persons;
  const auto rest = rest_pose(set.graph);

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  constexpr double kTwoPi = 2.0 * std::numbers::pi;

  std::vector<Motif> motifs(spec.classes);
  for (std::size_t k = 0; k < spec.classes; ++k) {
    Motif& m = motifs[k];
    m.frequency = 1.0 + 0.5 * static_cast<double>(k);
    m.amplitude.resize(V * 3);
    m.phase.resize(V * 3);
    for (std::size_t i = 0; i < V * 3; ++i) {
      m.amplitude[i] = 0.1 + 0.4 * unit(rng);
      m.phase[i] = kTwoPi * unit(rng);
    }
  }

  auto draw_split = [&](std::size_t per_class, std::uint64_t stream,
                        std::vector<SkeletonSequence>& out) {
    Rng srng = make_rng(spec.seed, {stream});
    auto jitter = [&](double half_width) { return half_width * (2.0 * unit(srng) - 1.0); };
    for (std::size_t k = 0; k < spec.classes; ++k) {
      for (std::size_t s = 0; s < per_class; ++s) {
        SkeletonSequence x = SkeletonSequence::zeros(3, T, V, P);
        x.label = static_cast<int>(k);
        for (std::size_t p = 0; p < P; ++p) {
          const double scale = 1.0 + jitter(spec.amplitude_jitter);
          const double delta = jitter(spec.phase_jitter);
          std::array<double, 9> shear{1, jitter(spec.shear_jitter), jitter(spec.shear_jitter),
                                      jitter(spec.shear_jitter), 1, jitter(spec.shear_jitter),
                                      jitter(spec.shear_jitter), jitter(spec.shear_jitter), 1};
          const double offset = static_cast<double>(p);
          for (std::size_t t = 0; t < T; ++t) {
            const double time = kTwoPi * motifs[k].frequency * static_cast<double>(t) /
                                static_cast<double>(T);
            for (std::size_t v = 0; v < V; ++v) {
              std::array<double, 3> pt{};
              for (std::size_t c = 0; c < 3; ++c) {
                const std::size_t i = v * 3 + c;
                pt[c] = rest[v][c] + (c == 0 ? offset : 0.0) +
                        scale * motifs[k].amplitude[i] *
                            std::sin(time + motifs[k].phase[i] + delta);
              }
              for (std::size_t r = 0; r < 3; ++r) {
                double acc = 0.0;
                for (std::size_t c = 0; c < 3; ++c) acc += shear[r * 3 + c] * pt[c];
                x.at(r, t, v, p) = acc + spec.noise_std * gauss(srng);
              }
            }
          }
        }
        for (double& v : x.data) v = static_cast<double>(static_cast<float>(v));
        out.push_back(std::move(x));
      }
    }
  };
  draw_split(spec.per_class, 1, set.sequences);
  draw_split(spec.test_per_class, 2, set.test_sequences);
  return set;
}

namespace {

DatasetManifest write_split(const std::vector<SkeletonSequence>& seqs, std::size_t num_classes,
                            const std::filesystem::path& out_dir, const char* prefix,
                            const char* manifest_name) {
  DatasetManifest m;
  m.num_classes = num_classes;
  m.base_dir = out_dir;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    char name[48];
    std::snprintf(name, sizeof(name), "%s_%05zu.skl", prefix, i);
    save_sequence(out_dir / name, seqs[i]);
    m.entries.push_back({name, *seqs[i].label});
  }
  save_manifest(out_dir / manifest_name, m);
  return m;
}

}  // namespace

DatasetManifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir) {
  const SyntheticSet set = make_synthetic(spec);
  std::filesystem::create_directories(out_dir);
  DatasetManifest m = write_split(set.sequences, set.num_classes, out_dir, "seq", "manifest.json");
  if (!set.test_sequences.empty()) {
    write_split(set.test_sequences, set.num_classes, out_dir, "test", "test_manifest.json");
  }
  save_graph(out_dir / "graph.json", set.graph);
  return m;
}

}  // namespace aimclr
