#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace aimclr {

/// Coordinate sequence laid out [C x T x V x P], c-major then t, v, p.
struct SkeletonSequence {
  std::size_t channels = 0;
  std::size_t frames = 0;
  std::size_t joints = 0;
  std::size_t persons = 0;
  std::vector<double> data;
  std::optional<int> label;

  static SkeletonSequence zeros(std::size_t c, std::size_t t, std::size_t v, std::size_t p);

  std::size_t index(std::size_t c, std::size_t t, std::size_t v, std::size_t p) const {
    return ((c * frames + t) * joints + v) * persons + p;
  }
  double& at(std::size_t c, std::size_t t, std::size_t v, std::size_t p) {
    return data[index(c, t, v, p)];
  }
  double at(std::size_t c, std::size_t t, std::size_t v, std::size_t p) const {
    return data[index(c, t, v, p)];
  }
  bool same_dims(const SkeletonSequence& other) const {
    return channels == other.channels && frames == other.frames && joints == other.joints &&
           persons == other.persons;
  }
  std::size_t size() const { return channels * frames * joints * persons; }
  bool all_finite() const;
};

/// Kinematic tree over the joints. Edges are (parent, child) and the tree is
/// rooted at `center`.
struct SkeletonGraph {
  std::size_t num_joints = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::size_t center = 0;
  std::vector<std::pair<std::size_t, std::size_t>> left_right_pairs;

  // Throws std::invalid_argument describing the first violated invariant.
  void validate() const;
  // parent[v] for every joint; the center maps to itself.
  std::vector<std::size_t> parents() const;
};

// Three branches hanging off joint 0: a spine/head chain and mirrored left
// and right chains. V = 9 gives spine 0-1-2, left 3-4-5, right 6-7-8.
SkeletonGraph make_tree_graph(std::size_t num_joints);
// The 25-joint NTU RGB+D layout, centered at the spine-shoulder joint.
SkeletonGraph ntu25_graph();

enum class Stream { Joint, Bone, Motion };
Stream parse_stream(const std::string& name);
std::string stream_name(Stream s);

// child - parent for every edge; zero at the center. Applied per person slot.
SkeletonSequence to_bone_stream(const SkeletonSequence& x, const SkeletonGraph& g);
// x[t] - x[t-1] with a zero first frame.
SkeletonSequence to_motion_stream(const SkeletonSequence& x);
SkeletonSequence to_stream(const SkeletonSequence& x, const SkeletonGraph& g, Stream s);

// ---------------------------------------------------------------------------
// On-disk formats.

class SequenceIOError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class SequenceFormatError : public SequenceIOError {
 public:
  using SequenceIOError::SequenceIOError;
};
class SequenceTruncatedError : public SequenceIOError {
 public:
  using SequenceIOError::SequenceIOError;
};
class SequenceNonFiniteError : public SequenceIOError {
 public:
  using SequenceIOError::SequenceIOError;
};

// SKL1: "SKL1", u32le C, T, V, P, then C*T*V*P f32le values.
std::vector<std::uint8_t> encode_sequence(const SkeletonSequence& x);
SkeletonSequence decode_sequence(const std::vector<std::uint8_t>& bytes);
void save_sequence(const std::filesystem::path& path, const SkeletonSequence& x);
SkeletonSequence load_sequence(const std::filesystem::path& path);

struct ManifestEntry {
  std::string path;
  int label = 0;
};

struct DatasetManifest {
  std::size_t num_classes = 0;
  std::vector<ManifestEntry> entries;
  // Relative entry paths resolve against this directory.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const ManifestEntry& e) const;
  void validate() const;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& m);
// Loads every entry and attaches its label.
std::vector<SkeletonSequence> load_dataset(const DatasetManifest& m);

SkeletonGraph load_graph(const std::filesystem::path& path);
void save_graph(const std::filesystem::path& path, const SkeletonGraph& g);

// ---------------------------------------------------------------------------
// Synthetic labeled data.

struct SyntheticSpec {
  std::size_t classes = 4;
  std::size_t per_class = 64;
  // Held-out samples per class, drawn from an independent stream.
  std::size_t test_per_class = 0;
  std::size_t frames = 32;
  std::size_t joints = 9;
  std::size_t persons = 1;
  std::uint64_t seed = 7;
  double noise_std = 0.02;
  // Per-sample nuisance: amplitude scale jitter, phase jitter (radians) and a
  // random shear of the whole sequence with factors in [-shear, shear].
  double amplitude_jitter = 0.15;
  double phase_jitter = 0.6;
  double shear_jitter = 0.3;
};

struct SyntheticSet {
  SkeletonGraph graph;
  std::size_t num_classes = 0;
  std::vector<SkeletonSequence> sequences;  // labeled, class-major order
  std::vector<SkeletonSequence> test_sequences;
};

/// Each class is a fixed sinusoidal motif (its own frequency and per-joint
/// phases and amplitudes) on a rest pose; samples add seeded nuisance and
/// noise. Values are rounded to f32 so in-memory and on-disk copies agree.
SyntheticSet make_synthetic(const SyntheticSpec& spec);

/// Writes seq_NNNNN.skl files, manifest.json and graph.json under `out_dir`;
/// held-out samples go to test_NNNNN.skl and test_manifest.json.
DatasetManifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

}  // namespace aimclr
