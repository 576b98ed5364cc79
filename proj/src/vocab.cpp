#include "hieradapt/vocab.hpp"

#include "hieradapt/errors.hpp"

namespace hieradapt::lm {

std::vector<int> Vocab::encode(std::string_view text) const {
    std::vector<int> ids;
    ids.reserve(text.size() + 1);
    ids.push_back(kBos);
    for (unsigned char c : text) ids.push_back(kByteOffset + static_cast<int>(c));
    return ids;
}

std::string Vocab::decode(std::span<const int> ids) const {
    std::string out;
    out.reserve(ids.size());
    for (int id : ids) {
        if (id < 0 || id >= kSize) throw IndexError("vocab: id out of range");
        if (id >= kByteOffset) out.push_back(static_cast<char>(id - kByteOffset));
    }
    return out;
}

}  // namespace hieradapt::lm
