#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hieradapt::lm {

// Byte-level vocabulary: four reserved specials followed by the 256 byte
// values. Any byte sequence round-trips losslessly.
class Vocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;
    static constexpr int kByteOffset = 4;
    static constexpr int kSize = 260;

    int size() const { return kSize; }

    // bos followed by one id per byte.
    std::vector<int> encode(std::string_view text) const;

    // Inverse of encode; special ids are skipped.
    std::string decode(std::span<const int> ids) const;
};

}  // namespace hieradapt::lm
