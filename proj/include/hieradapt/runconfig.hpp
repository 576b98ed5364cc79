#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "hieradapt/clustering.hpp"
#include "hieradapt/lm.hpp"
#include "hieradapt/routing.hpp"
#include "hieradapt/trainer_config.hpp"

namespace hieradapt::cli {

// Flat TOML-style document: [section] headers and key = value lines, with
// integers, floats, booleans and quoted strings. See the README for the
// exact grammar.
class KeyValueDoc {
public:
    static KeyValueDoc parse(const std::string& text);
    static KeyValueDoc parse_file(const std::filesystem::path& path);

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::map<std::string, std::string> section(const std::string& name) const;

private:
    std::map<std::string, std::string> values_;  // "section.key" -> raw value
};

struct ClusterSettings {
    int pca_dims = 8;
    int components = 4;
    double reg = 1e-6;
    int n_init = 5;
    int max_iter = 200;
    double tol = 1e-7;
    int sequences_per_domain = 100;
    int embed_seq_len = 64;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::filesystem::path outdir = "out";
    std::map<std::string, std::filesystem::path> corpora;
    lm::LmConfig lm;
    trainer::TrainConfig pretrain;
    trainer::TrainConfig train;
    int bottleneck = 16;
    int baseline_bottleneck = 0;  // 0 derives the flop-parity size from the tree
    std::string manual_tree;      // nested-list text; empty means clustered tree
    ClusterSettings clustering;
    routing::RoutingConfig routing;
    int eval_seq_len = 0;          // 0 falls back to train.seq_len
    long long eval_max_tokens = 0;  // 0 evaluates each full domain stream

    // Relative paths resolve against the config file's directory. The
    // HIERADAPT_SEED environment variable overrides the configured seed.
    static RunConfig load(const std::filesystem::path& path);
    void validate() const;
};

}  // namespace hieradapt::cli
