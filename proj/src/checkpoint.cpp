#include "mmvr/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "mmvr/pixmap.hpp"

namespace mmvr {
namespace {

constexpr char kMagic[8] = {'M', 'M', 'V', 'R', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    for (std::size_t i = sizeof(T); i-- > 0;) out.push_back(buf[i]);
  } else {
    out.append(reinterpret_cast<const char*>(&value), sizeof(T));
  }
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    if constexpr (std::endian::native == std::endian::big) {
      char buf[sizeof(T)];
      for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = bytes_[pos_ + sizeof(T) - 1 - i];
      std::memcpy(&value, buf, sizeof(T));
    } else {
      std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    }
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error("checkpoint: truncated file");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor& ModelCheckpoint::block(const std::string& name) const {
  for (const auto& [n, t] : blocks) {
    if (n == name) return t;
  }
  throw Error("checkpoint '" + kind + "': missing parameter block '" + name + "'");
}

bool ModelCheckpoint::has_block(const std::string& name) const {
  for (const auto& b : blocks) {
    if (b.first == name) return true;
  }
  return false;
}

std::string encode_checkpoint(const ModelCheckpoint& ckpt) {
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, ckpt.version);
  put_string(out, ckpt.kind);
  nlohmann::json header = {{"hyperparameters", ckpt.hyperparameters}, {"seed", ckpt.seed}};
  put_string(out, header.dump());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.blocks.size()));
  for (const auto& [name, t] : ckpt.blocks) {
    put_string(out, name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape) put<std::uint64_t>(out, d);
  }
  for (const auto& b : ckpt.blocks) {
    for (double v : b.second.data) put<double>(out, v);
  }
  return out;
}

ModelCheckpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw Error("checkpoint: bad magic");
  }
  const std::string body = bytes.substr(sizeof kMagic);
  Reader in(body);
  ModelCheckpoint c;
  c.version = in.get<std::uint32_t>();
  if (c.version != ModelCheckpoint::kFormatVersion) {
    throw Error("checkpoint: unsupported format version " + std::to_string(c.version));
  }
  c.kind = in.get_string();
  try {
    const auto header = nlohmann::json::parse(in.get_string());
    c.hyperparameters = header.at("hyperparameters");
    c.seed = header.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: bad header: ") + e.what());
  }
  const auto n = in.get<std::uint32_t>();
  std::vector<std::pair<std::string, Shape>> index;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = in.get_string();
    const auto rank = in.get<std::uint32_t>();
    Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(static_cast<std::size_t>(in.get<std::uint64_t>()));
    index.emplace_back(std::move(name), std::move(shape));
  }
  for (auto& [name, shape] : index) {
    std::vector<double> data(shape_size(shape));
    for (double& v : data) v = in.get<double>();
    c.blocks.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (!in.done()) throw Error("checkpoint: trailing bytes");
  return c;
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& file) {
  write_file(file, encode_checkpoint(ckpt));
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& file) { return decode_checkpoint(read_file(file)); }

}  // namespace mmvr
