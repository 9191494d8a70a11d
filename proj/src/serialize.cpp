#include "peca/serialize.hpp"

#include <bit>
#include <fstream>
#include <istream>
#include <ostream>

#include "peca/error.hpp"

namespace peca {
namespace {

constexpr char kMagic[4] = {'P', 'E', 'C', 'A'};

template <class UInt>
void put_le(std::ostream& out, UInt v) {
    char bytes[sizeof(UInt)];
    for (std::size_t i = 0; i < sizeof(UInt); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(bytes, sizeof(UInt));
}

template <class UInt>
bool get_le(std::istream& in, UInt& v) {
    unsigned char bytes[sizeof(UInt)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(UInt))) return false;
    v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(bytes[i]) << (8 * i);
    return true;
}

template <class UInt>
UInt require_le(std::istream& in, const char* what) {
    UInt v{};
    if (!get_le(in, v)) throw ContractError(std::string("truncated tensor file while reading ") + what);
    return v;
}

}  // namespace

void write_tensors(std::ostream& out, std::span<const NamedTensor> tensors) {
    out.write(kMagic, 4);
    put_le<std::uint32_t>(out, kTensorFormatVersion);
    for (const auto& [name, t] : tensors) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (auto e : t.shape()) put_le<std::uint64_t>(out, e);
        for (double v : t.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
}

std::vector<NamedTensor> read_tensors(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) throw ContractError("not a PECA tensor file");
    const auto version = require_le<std::uint32_t>(in, "version");
    if (version != kTensorFormatVersion)
        throw ContractError("unsupported PECA format version " + std::to_string(version));
    std::vector<NamedTensor> result;
    std::uint32_t name_len = 0;
    while (get_le(in, name_len)) {
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) throw ContractError("truncated tensor name");
        const auto rank = require_le<std::uint32_t>(in, "rank");
        Shape shape(rank);
        for (auto& e : shape) e = require_le<std::uint64_t>(in, "extent");
        std::vector<double> data(shape_numel(shape));
        for (auto& v : data) v = std::bit_cast<double>(require_le<std::uint64_t>(in, "payload"));
        result.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
    }
    return result;
}

void save_tensors(const std::filesystem::path& path, std::span<const NamedTensor> tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ContractError("cannot open " + path.string() + " for writing");
    write_tensors(out, tensors);
    if (!out) throw ContractError("failed writing " + path.string());
}

std::vector<NamedTensor> load_tensors(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ContractError("cannot open " + path.string());
    return read_tensors(in);
}

const Tensor* find_tensor(std::span<const NamedTensor> tensors, std::string_view name) {
    for (const auto& nt : tensors)
        if (nt.name == name) return &nt.tensor;
    return nullptr;
}

const Tensor& require_tensor(std::span<const NamedTensor> tensors, std::string_view name) {
    const Tensor* t = find_tensor(tensors, name);
    if (!t) throw ContractError("missing tensor '" + std::string(name) + "'");
    return *t;
}

}  // namespace peca
