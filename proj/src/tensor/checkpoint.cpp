#include "unict/tensor/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace unict::tensor {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

template <typename U>
void put(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U get(std::istream& is, const char* what) {
  U v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(U))) {
    throw CheckpointError(std::string("truncated checkpoint while reading ") + what);
  }
  return v;
}

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  put<std::uint8_t>(os, static_cast<std::uint8_t>(dtype_of<T>()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put<std::uint64_t>(os, d);
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(T)));
}

template <typename T>
Tensor<T> read_payload(std::istream& is, Shape shape) {
  Tensor<T> t(std::move(shape));
  if (!is.read(reinterpret_cast<char*>(t.data()),
               static_cast<std::streamsize>(t.size() * sizeof(T)))) {
    throw CheckpointError("truncated checkpoint payload");
  }
  return t;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint64_t>(os, tensors.size());
  for (const auto& nt : tensors) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(nt.name.size()));
    os.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
    std::visit([&os](const auto& t) { write_tensor(os, t); }, nt.tensor);
  }
  if (!os) throw CheckpointError("failed writing checkpoint: " + path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path.string());
  char magic[sizeof(kCheckpointMagic) - 1];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw CheckpointError("bad checkpoint magic in " + path.string());
  }
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get<std::uint64_t>(is, "count");
  std::vector<NamedTensor> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(is, "name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw CheckpointError("truncated tensor name");
    const auto dtype = get<std::uint8_t>(is, "dtype");
    const auto rank = get<std::uint32_t>(is, "rank");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(is, "dims"));
    if (dtype == static_cast<std::uint8_t>(DType::kFloat32)) {
      out.push_back({std::move(name), read_payload<float>(is, std::move(shape))});
    } else if (dtype == static_cast<std::uint8_t>(DType::kFloat64)) {
      out.push_back({std::move(name), read_payload<double>(is, std::move(shape))});
    } else {
      throw CheckpointError("unknown dtype tag " + std::to_string(dtype) + " for " + name);
    }
  }
  return out;
}

}  // namespace unict::tensor
