#include "hieradapt/corpus.hpp"

#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>

#include "hieradapt/errors.hpp"
#include "hieradapt/vocab.hpp"

namespace hieradapt::lm {

std::vector<std::string> CorpusSet::domain_names() const {
    std::vector<std::string> names;
    names.reserve(domains.size());
    for (const auto& [name, _] : domains) names.push_back(name);
    return names;
}

const std::vector<int>& CorpusSet::stream(const std::string& domain) const {
    auto it = domains.find(domain);
    if (it == domains.end()) throw DataError("unknown domain: " + domain);
    return it->second;
}

std::size_t CorpusSet::total_tokens() const {
    std::size_t n = 0;
    for (const auto& [_, stream] : domains) n += stream.size();
    return n;
}

CorpusSet CorpusSet::from_text(const std::map<std::string, std::string>& raw) {
    Vocab vocab;
    CorpusSet set;
    for (const auto& [name, text] : raw) {
        std::vector<int> stream;
        std::istringstream lines(text);
        std::string line;
        while (std::getline(lines, line)) {
            if (line.empty()) continue;
            auto ids = vocab.encode(line);
            stream.insert(stream.end(), ids.begin(), ids.end());
            stream.push_back(Vocab::kEos);
        }
        if (stream.empty()) throw DataError("empty corpus for domain: " + name);
        set.domains.emplace(name, std::move(stream));
    }
    if (set.domains.empty()) throw DataError("corpus set has no domains");
    return set;
}

CorpusSet CorpusSet::load(const std::map<std::string, std::filesystem::path>& files) {
    std::map<std::string, std::string> raw;
    for (const auto& [name, path] : files) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError("cannot open corpus file: " + path.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        raw.emplace(name, buf.str());
    }
    return from_text(raw);
}

std::vector<int> sample_window(const std::vector<int>& stream, int seq_len, Rng& rng,
                               const std::string& domain) {
    if (stream.empty()) throw DataError("cannot sample from empty domain: " + domain);
    if (seq_len < 2) throw ContractError("seq_len must be at least 2");
    const std::size_t len = stream.size();
    const std::size_t want = static_cast<std::size_t>(seq_len);
    std::vector<int> window(want);
    if (len >= want) {
        const std::size_t start = rng.uniform_index(len - want + 1);
        std::copy(stream.begin() + start, stream.begin() + start + want, window.begin());
        return window;
    }
    {
        static std::mutex mu;
        static std::set<std::string> warned;
        std::lock_guard<std::mutex> lock(mu);
        if (warned.insert(domain).second)
            std::cerr << "warning: domain '" << domain << "' is shorter than seq_len, "
                      << "windows wrap around\n";
    }
    const std::size_t start = rng.uniform_index(len);
    for (std::size_t i = 0; i < want; ++i) window[i] = stream[(start + i) % len];
    return window;
}

}  // namespace hieradapt::lm
