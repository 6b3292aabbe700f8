#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "aimclr/skeleton.hpp"

namespace aimclr {

namespace {

constexpr char kMagic[4] = {'S', 'K', 'L', '1'};
constexpr std::size_t kHeaderBytes = 4 + 4 * 4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SequenceIOError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

std::vector<std::uint8_t> encode_sequence(const SkeletonSequence& x) {
  if (x.data.size() != x.size()) throw SequenceFormatError("sequence data does not match dims");
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + 4 * x.data.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(x.channels));
  put_u32(out, static_cast<std::uint32_t>(x.frames));
  put_u32(out, static_cast<std::uint32_t>(x.joints));
  put_u32(out, static_cast<std::uint32_t>(x.persons));
  for (double v : x.data) {
    if (!std::isfinite(v)) throw SequenceNonFiniteError("refusing to save non-finite value");
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

SkeletonSequence decode_sequence(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw SequenceFormatError("bad magic: expected SKL1");
  }
  if (bytes.size() < kHeaderBytes) throw SequenceTruncatedError("truncated SKL1 header");
  const std::uint8_t* p = bytes.data() + 4;
  SkeletonSequence x = SkeletonSequence::zeros(get_u32(p), get_u32(p + 4), get_u32(p + 8),
                                               get_u32(p + 12));
  const std::size_t expected = kHeaderBytes + 4 * x.size();
  if (bytes.size() < expected) {
    throw SequenceTruncatedError("SKL1 payload truncated: expected " + std::to_string(expected) +
                                 " bytes, got " + std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) throw SequenceFormatError("trailing bytes after SKL1 payload");
  const std::uint8_t* payload = bytes.data() + kHeaderBytes;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float f = std::bit_cast<float>(get_u32(payload + 4 * i));
    if (!std::isfinite(f)) {
      throw SequenceNonFiniteError("non-finite value at flat index " + std::to_string(i));
    }
    x.data[i] = f;
  }
  return x;
}

void save_sequence(const std::filesystem::path& path, const SkeletonSequence& x) {
  const auto bytes = encode_sequence(x);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SequenceIOError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

SkeletonSequence load_sequence(const std::filesystem::path& path) {
  try {
    return decode_sequence(read_file(path));
  } catch (const SequenceFormatError& e) {
    throw SequenceFormatError(path.string() + ": " + e.what());
  } catch (const SequenceTruncatedError& e) {
    throw SequenceTruncatedError(path.string() + ": " + e.what());
  } catch (const SequenceNonFiniteError& e) {
    throw SequenceNonFiniteError(path.string() + ": " + e.what());
  }
}

std::filesystem::path DatasetManifest::resolve(const ManifestEntry& e) const {
  const std::filesystem::path p(e.path);
  return p.is_absolute() ? p : base_dir / p;
}

void DatasetManifest::validate() const {
  if (num_classes == 0) throw std::invalid_argument("manifest: num_classes must be positive");
  for (const auto& e : entries) {
    if (e.label < 0 || static_cast<std::size_t>(e.label) >= num_classes) {
      throw std::invalid_argument("manifest: label " + std::to_string(e.label) + " of " + e.path +
                                  " outside [0, " + std::to_string(num_classes) + ")");
    }
    if (!std::filesystem::exists(resolve(e))) {
      throw std::invalid_argument("manifest: missing file " + resolve(e).string());
    }
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  const auto j = read_json(path);
  DatasetManifest m;
  try {
    m.num_classes = j.at("num_classes").get<std::size_t>();
    for (const auto& e : j.at("entries")) {
      m.entries.push_back({e.at("path").get<std::string>(), e.at("label").get<int>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  m.base_dir = path.parent_path();
  m.validate();
  return m;
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  nlohmann::json j;
  j["num_classes"] = m.num_classes;
  j["entries"] = nlohmann::json::array();
  for (const auto& e : m.entries) j["entries"].push_back({{"path", e.path}, {"label", e.label}});
  write_text(path, j.dump(2) + "\n");
}

std::vector<SkeletonSequence> load_dataset(const DatasetManifest& m) {
  std::vector<SkeletonSequence> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) {
    out.push_back(load_sequence(m.resolve(e)));
    out.back().label = e.label;
  }
  return out;
}

SkeletonGraph load_graph(const std::filesystem::path& path) {
  const auto j = read_json(path);
  SkeletonGraph g;
  try {
    g.num_joints = j.at("num_joints").get<std::size_t>();
    g.center = j.at("center").get<std::size_t>();
    for (const auto& e : j.at("edges")) g.edges.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
    if (j.contains("left_right_pairs")) {
      for (const auto& e : j.at("left_right_pairs")) {
        g.left_right_pairs.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  g.validate();
  return g;
}

void save_graph(const std::filesystem::path& path, const SkeletonGraph& g) {
  nlohmann::json j;
  j["num_joints"] = g.num_joints;
  j["center"] = g.center;
  j["edges"] = nlohmann::json::array();
  for (const auto& [p, c] : g.edges) j["edges"].push_back({p, c});
  j["left_right_pairs"] = nlohmann::json::array();
  for (const auto& [l, r] : g.left_right_pairs) j["left_right_pairs"].push_back({l, r});
  write_text(path, j.dump(2) + "\n");
}

}  // namespace aimclr
