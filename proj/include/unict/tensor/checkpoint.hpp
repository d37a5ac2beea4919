#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "unict/tensor/parameters.hpp"

namespace unict::tensor {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Layout (all integers little-endian):
//   "UNICTCKPT"  u32 version  u64 count
//   per tensor: u32 name_len, name bytes (UTF-8), u8 dtype (0 f32, 1 f64),
//               u32 rank, rank x u64 dims, raw row-major payload
inline constexpr char kCheckpointMagic[] = "UNICTCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::variant<Tensor<float>, Tensor<double>> tensor;
};

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

template <typename T>
void save_parameters(const std::filesystem::path& path, const ParameterStore<T>& params) {
  std::vector<NamedTensor> out;
  out.reserve(params.size());
  for (const auto& e : params.entries()) out.push_back({e.name, e.var.value()});
  save_checkpoint(path, out);
}

/// Overwrites every parameter in `params` from the file. Names, dtypes and
/// shapes must match exactly; missing or extra tensors are errors.
template <typename T>
void load_parameters(const std::filesystem::path& path, ParameterStore<T>& params) {
  auto tensors = load_checkpoint(path);
  if (tensors.size() != params.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(tensors.size()) +
                          " tensors, model expects " + std::to_string(params.size()));
  }
  for (auto& nt : tensors) {
    if (!params.contains(nt.name)) throw CheckpointError("unexpected tensor: " + nt.name);
    auto* t = std::get_if<Tensor<T>>(&nt.tensor);
    if (!t) throw CheckpointError("dtype mismatch for tensor: " + nt.name);
    Var<T> var = params.at(nt.name);
    if (t->shape() != var.shape()) {
      throw CheckpointError("shape mismatch for " + nt.name + ": file " + to_string(t->shape()) +
                            ", model " + to_string(var.shape()));
    }
    var.mutable_value() = std::move(*t);
  }
}

}  // namespace unict::tensor
