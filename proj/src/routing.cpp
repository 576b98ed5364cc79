#include "hieradapt/routing.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hieradapt/errors.hpp"
#include "hieradapt/ops.hpp"
#include "hieradapt/serial.hpp"

namespace hieradapt::routing {

void RoutingConfig::validate() const {
    if (n_probe < 1) throw ConfigError("routing: n_probe must be >= 1");
    if (n_paths < 1) throw ConfigError("routing: n_paths must be >= 1");
}

PathSelection select_paths(const clustering::GmmModel& gmm, const domtree::DomainTree& tree,
                           const linalg::Mat& probes, int n_paths) {
    if (probes.rows == 0) throw ContractError("select_paths: no probe vectors");
    if (tree.cluster_of_leaf().empty())
        throw ConfigError("select_paths: tree has no cluster mapping");
    const auto& cluster_of_leaf = tree.cluster_of_leaf();
    if (n_paths < 1 || static_cast<std::size_t>(n_paths) > cluster_of_leaf.size())
        throw ContractError("select_paths: n_paths must lie in [1, leaf count]");

    // Retained clusters, with their leaves, in cluster order.
    std::map<int, int> leaf_of_cluster;
    for (const auto& [leaf, cluster] : cluster_of_leaf) {
        if (!leaf_of_cluster.emplace(cluster, leaf).second)
            throw ValidationError("select_paths: two leaves share one cluster");
    }

    std::map<int, long long> votes;
    for (const auto& [cluster, _] : leaf_of_cluster) votes[cluster] = 0;
    for (std::size_t r = 0; r < probes.rows; ++r) {
        const auto resp = clustering::responsibilities(gmm, probes.row(r));
        int best = -1;
        double best_p = -1.0;
        for (const auto& [cluster, _] : leaf_of_cluster) {
            if (cluster < 0 || static_cast<std::size_t>(cluster) >= resp.size())
                throw ConfigError("select_paths: tree references cluster " +
                                  std::to_string(cluster) + " outside the mixture");
            if (resp[static_cast<std::size_t>(cluster)] > best_p) {
                best_p = resp[static_cast<std::size_t>(cluster)];
                best = cluster;
            }
        }
        votes[best] += 1;
    }

    PathSelection out;
    out.total_votes = static_cast<long long>(probes.rows);
    out.probe_fingerprint = io::fnv1a64(probes.a.data(), probes.a.size() * sizeof(double));
    for (const auto& [cluster, leaf] : leaf_of_cluster)
        out.ranked.push_back({leaf, cluster, votes.at(cluster)});
    std::stable_sort(out.ranked.begin(), out.ranked.end(),
                     [](const RankedLeaf& a, const RankedLeaf& b) {
                         if (a.votes != b.votes) return a.votes > b.votes;
                         return a.cluster < b.cluster;
                     });
    for (int i = 0; i < n_paths; ++i)
        out.selected.push_back(out.ranked[static_cast<std::size_t>(i)].leaf);
    return out;
}

lm::AdapterHook multi_path_hook(const domtree::DomainTree& tree,
                                const adapters::AdapterStore& store,
                                std::span<const int> leaves, PathCombine combine) {
    if (leaves.empty()) throw ContractError("multi_path_hook: no paths");
    std::vector<std::vector<int>> paths;
    paths.reserve(leaves.size());
    for (int leaf : leaves) {
        paths.push_back(domtree::path_to_leaf(tree, leaf));
        for (int id : paths.back()) store.node(id);  // every node must have adapters
    }
    if (combine == PathCombine::kUnionOfNodes && paths.size() > 1) {
        std::set<int> union_ids;
        for (const auto& path : paths) union_ids.insert(path.begin(), path.end());
        std::vector<const adapters::AdapterParams*> nodes;
        for (int id : union_ids) nodes.push_back(&store.node(id));
        return [nodes, &store](const numcore::Tensor& h, int layer) {
            return adapters::node_average(h, nodes, layer, store.shared);
        };
    }
    if (paths.size() == 1) {
        // Single path: exactly the training-time computation.
        std::vector<const adapters::AdapterParams*> nodes;
        for (int id : paths.front()) nodes.push_back(&store.node(id));
        return [nodes, &store](const numcore::Tensor& h, int layer) {
            return adapters::node_average(h, nodes, layer, store.shared);
        };
    }
    return [paths, &store](const numcore::Tensor& h, int layer) {
        using numcore::Tensor;
        std::map<int, Tensor> branch_of;  // each node computed once per layer
        for (const auto& path : paths)
            for (int id : path)
                if (branch_of.find(id) == branch_of.end())
                    branch_of.emplace(
                        id, adapters::adapter_branch(h, store.node(id), layer, store.shared));
        Tensor combined;
        for (const auto& path : paths) {
            Tensor acc = branch_of.at(path[0]);
            for (std::size_t i = 1; i < path.size(); ++i)
                acc = numcore::add(acc, branch_of.at(path[i]));
            Tensor path_mean = numcore::scale(acc, 1.0 / static_cast<double>(path.size()));
            combined = combined.defined() ? numcore::add(combined, path_mean) : path_mean;
        }
        combined = numcore::scale(combined, 1.0 / static_cast<double>(paths.size()));
        return numcore::add(h, combined);
    };
}

PerplexityResult evaluate_perplexity(const lm::LmModel& model, const lm::AdapterHook& hook,
                                     std::span<const int> stream, int seq_len) {
    if (seq_len < 2) throw ContractError("evaluate_perplexity: seq_len must be >= 2");
    const std::size_t want = static_cast<std::size_t>(seq_len);
    const std::size_t n_windows = stream.size() / want;
    if (n_windows == 0)
        throw DataError("evaluate_perplexity: corpus yields no full sequence");

    numcore::Tape::Suspend no_tape;
    std::vector<double> window_nll(n_windows, 0.0);
    std::string error;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (n_windows > 2)
#endif
    for (long long wi = 0; wi < static_cast<long long>(n_windows); ++wi) {
        const auto w = static_cast<std::size_t>(wi);
        try {
            std::span<const int> ids = stream.subspan(w * want, want);
            const double mean_nll = lm::window_loss(model, ids, hook).value();
            window_nll[w] = mean_nll * static_cast<double>(want - 1);
        } catch (const std::exception& e) {
#ifdef _OPENMP
#pragma omp critical
#endif
            error = e.what();
        }
    }
    if (!error.empty()) throw NumericError("evaluate_perplexity: " + error);

    PerplexityResult out;
    for (double v : window_nll) out.nll_sum += v;  // fixed-order reduction
    out.positions = static_cast<long long>(n_windows * (want - 1));
    out.tokens = static_cast<long long>(n_windows * want);
    out.perplexity = std::exp(out.nll_sum / static_cast<double>(out.positions));
    return out;
}

std::string route_report_json(const std::string& domain, const PathSelection& selection) {
    nlohmann::json doc;
    doc["domain"] = domain;
    doc["ranked"] = nlohmann::json::array();
    for (const auto& r : selection.ranked) {
        nlohmann::json jr;
        jr["leaf"] = r.leaf;
        jr["cluster"] = r.cluster;
        jr["votes"] = r.votes;
        doc["ranked"].push_back(jr);
    }
    doc["paths_used"] = selection.selected;
    doc["total_votes"] = selection.total_votes;
    std::ostringstream fp;
    fp << std::hex << selection.probe_fingerprint;
    doc["probe_fingerprint"] = fp.str();
    return doc.dump(2) + "\n";
}

std::string perplexity_csv(std::span<const PerplexityRow> rows) {
    std::ostringstream out;
    out << "domain,model_variant,n_paths,perplexity,tokens\n";
    out.precision(17);
    for (const auto& r : rows)
        out << r.domain << ',' << r.variant << ',' << r.n_paths << ',' << r.perplexity << ','
            << r.tokens << "\n";
    return out.str();
}

}  // namespace hieradapt::routing
