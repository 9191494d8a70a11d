#include "peca/rng.hpp"

#include <vector>

namespace peca {

RngStream::RngStream(StreamTag tag, std::initializer_list<std::uint64_t> key) {
    std::vector<std::uint32_t> words;
    auto push = [&](std::uint64_t v) {
        words.push_back(static_cast<std::uint32_t>(v));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(static_cast<std::uint64_t>(tag));
    for (auto k : key) push(k);
    std::seed_seq seq(words.begin(), words.end());
    engine_.seed(seq);
}

}  // namespace peca
