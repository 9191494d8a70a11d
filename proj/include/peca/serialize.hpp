#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "peca/tensor.hpp"

namespace peca {

// Binary layout, all integers little-endian:
//   "PECA" | u32 version | records until EOF
//   record: u32 name_len | name bytes (UTF-8) | u32 rank | u64 extents[rank] | f64 payload[numel]
inline constexpr std::uint32_t kTensorFormatVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

void write_tensors(std::ostream& out, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> read_tensors(std::istream& in);

void save_tensors(const std::filesystem::path& path, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> load_tensors(const std::filesystem::path& path);

// Lookup helpers over a loaded record list.
const Tensor* find_tensor(std::span<const NamedTensor> tensors, std::string_view name);
const Tensor& require_tensor(std::span<const NamedTensor> tensors, std::string_view name);

}  // namespace peca
