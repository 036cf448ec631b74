#include "sseg/engine/archive.hpp"

#include <cstring>

#include "sseg/core/errors.hpp"
#include "sseg/core/fs.hpp"

namespace sseg {
namespace {

constexpr char kMagic[8] = {'S', 'S', 'E', 'G', 'A', 'R', 'C', '\0'};

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint8_t dtype_code(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return 0;
    case torch::kFloat64: return 1;
    case torch::kInt64: return 2;
    case torch::kUInt8: return 3;
    case torch::kFloat16: return 4;
    case torch::kInt32: return 5;
    case torch::kBool: return 6;
    default: fail(ErrorCode::IOError, std::string("archive cannot store dtype ") + c10::toString(t));
  }
}

torch::ScalarType dtype_from_code(std::uint8_t code) {
  switch (code) {
    case 0: return torch::kFloat32;
    case 1: return torch::kFloat64;
    case 2: return torch::kInt64;
    case 3: return torch::kUInt8;
    case 4: return torch::kFloat16;
    case 5: return torch::kInt32;
    case 6: return torch::kBool;
    default: fail(ErrorCode::CorruptFile, "unknown dtype code " + std::to_string(code));
  }
}

class Writer {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t size) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes.insert(bytes.end(), p, p + size);
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}
  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)), sizeof(T));
    return value;
  }
  const std::uint8_t* take(std::size_t n) {
    if (n > size_ - pos_) fail(ErrorCode::CorruptFile, "archive is truncated");
    const auto* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

}  // namespace

void Archive::add(std::string name, const torch::Tensor& tensor) {
  arrays.emplace_back(std::move(name), tensor.detach().to(torch::kCPU).contiguous().clone());
}

torch::Tensor Archive::find(const std::string& name) const {
  for (const auto& [key, tensor] : arrays) {
    if (key == name) return tensor;
  }
  return {};
}

std::vector<std::uint8_t> serialize_archive(const Archive& archive) {
  Writer w;
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(Archive::kArchiveVersion);
  const auto meta = archive.metadata.dump();
  w.put<std::uint64_t>(meta.size());
  w.put_bytes(meta.data(), meta.size());
  w.put<std::uint64_t>(archive.arrays.size());
  for (const auto& [name, tensor] : archive.arrays) {
    const auto t = tensor.contiguous();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.put_bytes(name.data(), name.size());
    w.put<std::uint8_t>(dtype_code(t.scalar_type()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.dim()));
    for (auto d : t.sizes()) w.put<std::int64_t>(d);
    const auto nbytes = static_cast<std::uint64_t>(t.numel() * t.element_size());
    w.put<std::uint64_t>(nbytes);
    w.put_bytes(t.data_ptr(), nbytes);
  }
  w.put<std::uint64_t>(fnv1a(w.bytes.data(), w.bytes.size()));
  return std::move(w.bytes);
}

Archive deserialize_archive(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof(kMagic) + sizeof(std::uint64_t) ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorCode::CorruptFile, "not an archive (bad magic)");
  }
  const auto body = bytes.size() - sizeof(std::uint64_t);
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, sizeof(stored));
  if (stored != fnv1a(bytes.data(), body)) fail(ErrorCode::CorruptFile, "archive checksum mismatch");

  Reader r(bytes.data(), body);
  r.take(sizeof(kMagic));
  const auto version = r.get<std::uint32_t>();
  if (version != Archive::kArchiveVersion) {
    fail(ErrorCode::VersionMismatch, "archive version " + std::to_string(version) + ", expected " +
                                         std::to_string(Archive::kArchiveVersion));
  }
  Archive archive;
  const auto meta_len = r.get<std::uint64_t>();
  const auto* meta = reinterpret_cast<const char*>(r.take(meta_len));
  try {
    archive.metadata = ConfigNode::parse(std::string(meta, meta_len));
  } catch (const std::exception& e) {
    fail(ErrorCode::CorruptFile, std::string("archive metadata: ") + e.what());
  }
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name(reinterpret_cast<const char*>(r.take(name_len)), name_len);
    const auto dtype = dtype_from_code(r.get<std::uint8_t>());
    const auto ndim = r.get<std::uint32_t>();
    std::vector<std::int64_t> dims(ndim);
    for (auto& d : dims) d = r.get<std::int64_t>();
    const auto nbytes = r.get<std::uint64_t>();
    auto tensor = torch::empty(dims, torch::TensorOptions().dtype(dtype));
    if (static_cast<std::uint64_t>(tensor.numel() * tensor.element_size()) != nbytes) {
      fail(ErrorCode::CorruptFile, "array '" + name + "' size disagrees with its shape");
    }
    std::memcpy(tensor.data_ptr(), r.take(nbytes), nbytes);
    archive.arrays.emplace_back(std::move(name), std::move(tensor));
  }
  return archive;
}

void save_archive(const std::filesystem::path& path, const Archive& archive) {
  write_file_atomic(path, serialize_archive(archive));
}

Archive load_archive(const std::filesystem::path& path) {
  const auto text = read_file(path);
  return deserialize_archive(std::vector<std::uint8_t>(text.begin(), text.end()));
}

}  // namespace sseg
