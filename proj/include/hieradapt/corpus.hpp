#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hieradapt/rng.hpp"

namespace hieradapt::lm {

// Token streams per domain. Each document (one per line in corpus files)
// contributes bos + its bytes + eos to the domain's stream.
struct CorpusSet {
    std::map<std::string, std::vector<int>> domains;

    std::vector<std::string> domain_names() const;
    const std::vector<int>& stream(const std::string& domain) const;
    std::size_t total_tokens() const;

    static CorpusSet from_text(const std::map<std::string, std::string>& raw);
    static CorpusSet load(const std::map<std::string, std::filesystem::path>& files);
};

// A seq_len window starting at a uniformly random offset of the stream.
// Streams shorter than seq_len wrap around (warned once per domain).
std::vector<int> sample_window(const std::vector<int>& stream, int seq_len, Rng& rng,
                               const std::string& domain);

}  // namespace hieradapt::lm
