#pragma once

#include <filesystem>

#include "peca/backbone.hpp"
#include "peca/gcm_memory.hpp"

namespace peca {

// Trained model: backbone config and weights plus the prototype memory,
// stored together in one PECA tensor file.
struct Checkpoint {
    BackboneConfig backbone;
    BackboneParams params;
    PrototypeMemory memory;

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace peca
