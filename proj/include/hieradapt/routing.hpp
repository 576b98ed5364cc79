#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hieradapt/adapters.hpp"
#include "hieradapt/clustering.hpp"
#include "hieradapt/domtree.hpp"
#include "hieradapt/lm.hpp"

namespace hieradapt::routing {

struct RoutingConfig {
    int n_probe = 1000;
    int n_paths = 1;

    void validate() const;
};

struct RankedLeaf {
    int leaf = -1;
    int cluster = -1;
    long long votes = 0;
};

struct PathSelection {
    std::vector<RankedLeaf> ranked;  // every leaf, by votes then lowest cluster
    std::vector<int> selected;       // top n_paths leaves
    long long total_votes = 0;
    std::uint64_t probe_fingerprint = 0;
};

// Each probe votes for its argmax-responsibility cluster among the tree's
// retained clusters (a vote for a pruned component falls to the best
// retained one, which is the same argmax). Leaves are ranked by votes,
// ties to the lowest cluster index.
PathSelection select_paths(const clustering::GmmModel& gmm, const domtree::DomainTree& tree,
                           const linalg::Mat& probes, int n_paths);

// How several paths combine at a layer: the default averages per-path
// means, which makes one path identical to training-time computation; the
// alternative averages over the union of path nodes.
enum class PathCombine { kMeanOfPathMeans, kUnionOfNodes };

// Per-layer transform combining the paths of the given leaves. Each node's
// adapter branch is computed once per layer even when paths overlap.
lm::AdapterHook multi_path_hook(const domtree::DomainTree& tree,
                                const adapters::AdapterStore& store,
                                std::span<const int> leaves,
                                PathCombine combine = PathCombine::kMeanOfPathMeans);

struct PerplexityResult {
    double perplexity = 0.0;
    double nll_sum = 0.0;
    long long positions = 0;
    long long tokens = 0;
};

// exp(mean next-token negative log-likelihood) over consecutive seq_len
// windows of the stream; a null hook evaluates the bare backbone.
PerplexityResult evaluate_perplexity(const lm::LmModel& model, const lm::AdapterHook& hook,
                                     std::span<const int> stream, int seq_len);

std::string route_report_json(const std::string& domain, const PathSelection& selection);

struct PerplexityRow {
    std::string domain;
    std::string variant;
    int n_paths = 0;
    double perplexity = 0.0;
    long long tokens = 0;
};

std::string perplexity_csv(std::span<const PerplexityRow> rows);

}  // namespace hieradapt::routing
