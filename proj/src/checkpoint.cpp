#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "aimclr/encoder.hpp"

namespace aimclr {

namespace {

constexpr char kMagic[4] = {'A', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::string origin)
      : bytes_(bytes), origin_(std::move(origin)) {}

  const std::uint8_t* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw CheckpointError(origin_ + ": truncated checkpoint");
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32() {
    const std::uint8_t* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const std::uint8_t* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_arrays(const std::filesystem::path& path, const std::vector<ParamSet::Entry>& arrays,
                 StorageType type) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, value] : arrays) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<std::uint8_t>(type));
    put_u32(out, static_cast<std::uint32_t>(value.rank()));
    for (std::size_t d : value.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : value.data()) {
      if (type == StorageType::F32) {
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      } else {
        put_u64(out, std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream file(path, std::ios::binary);
  if (!file) throw CheckpointError("cannot write " + path.string());
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

std::vector<ParamSet::Entry> load_arrays(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw CheckpointError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(file),
                                        std::istreambuf_iterator<char>()};
  Reader r(bytes, path.string());
  if (std::memcmp(r.take(4), kMagic, 4) != 0) {
    throw CheckpointError(path.string() + ": not a checkpoint (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw CheckpointError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  std::vector<ParamSet::Entry> arrays;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32();
    const std::uint8_t* name = r.take(name_len);
    const std::uint8_t type = *r.take(1);
    if (type > 1) throw CheckpointError(path.string() + ": unknown storage type");
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) {
      v = type == 0 ? static_cast<double>(std::bit_cast<float>(r.u32()))
                    : std::bit_cast<double>(r.u64());
    }
    arrays.push_back({std::string(reinterpret_cast<const char*>(name), name_len),
                      Tensor::from(std::move(shape), std::move(values))});
  }
  if (!r.done()) throw CheckpointError(path.string() + ": trailing bytes");
  return arrays;
}

void load_into(const std::filesystem::path& path, ParamSet& params) {
  const auto arrays = load_arrays(path);
  if (arrays.size() != params.size()) {
    throw CheckpointError(path.string() + ": holds " + std::to_string(arrays.size()) +
                          " arrays, model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    auto& target = params.entries()[i];
    if (arrays[i].name != target.name) {
      throw CheckpointError(path.string() + ": expected array '" + target.name + "', found '" +
                            arrays[i].name + "'");
    }
    if (arrays[i].value.shape() != target.value.shape()) {
      throw CheckpointError(path.string() + ": shape mismatch for '" + target.name + "': " +
                            shape_str(arrays[i].value.shape()) + " vs " +
                            shape_str(target.value.shape()));
    }
    auto dst = target.value.mutable_data();
    const auto src = arrays[i].value.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

}  // namespace aimclr
