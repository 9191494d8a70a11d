#include "peca/checkpoint.hpp"

namespace peca {

void Checkpoint::save(const std::filesystem::path& path) const {
    std::vector<NamedTensor> tensors;
    write_backbone_config(tensors, backbone);
    for (auto& t : params.to_named()) tensors.push_back(std::move(t));
    for (auto& t : memory.to_named()) tensors.push_back(std::move(t));
    save_tensors(path, tensors);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    const auto tensors = load_tensors(path);
    BackboneConfig config = read_backbone_config(tensors);
    BackboneParams params = BackboneParams::from_named(tensors, config);
    return {std::move(config), std::move(params), PrototypeMemory::from_named(tensors)};
}

}  // namespace peca
