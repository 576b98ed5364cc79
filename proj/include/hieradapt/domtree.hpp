#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hieradapt/adapters.hpp"
#include "hieradapt/lm.hpp"

namespace hieradapt::domtree {

struct TreeNode {
    int id = -1;
    std::optional<int> parent;
    std::vector<int> children;
    bool is_leaf() const { return children.empty(); }
};

struct LinkageStep {
    int left = -1;
    int right = -1;
    int new_id = -1;
    double height = 0.0;
    int size = 0;  // leaves under the merged cluster
};

// Nested grouping of domain names; a node is either one domain or a group.
struct GroupSpec {
    std::string domain;
    std::vector<GroupSpec> groups;

    static GroupSpec leaf(std::string name);
    static GroupSpec group(std::vector<GroupSpec> children);
    bool is_leaf() const { return groups.empty(); }
};

// Text form: a domain name, or a parenthesized comma-separated list of
// nested specs, e.g. "((alpha,bravo),(charlie,delta))".
GroupSpec parse_group_spec(const std::string& text);

// Rooted domain tree. Leaves carry training domains; agglomerative trees
// additionally map each leaf to the mixture cluster it came from.
class DomainTree {
public:
    const TreeNode& node(int id) const;
    bool has_node(int id) const;
    std::size_t node_count() const { return nodes_.size(); }
    std::vector<int> node_ids() const;
    std::vector<int> leaf_ids() const;
    int root() const { return root_; }

    const std::map<std::string, int>& leaf_of_domain() const { return leaf_of_domain_; }
    int leaf_for_domain(const std::string& domain) const;
    const std::map<int, int>& cluster_of_leaf() const { return cluster_of_leaf_; }
    int leaf_for_cluster(int cluster) const;
    const std::vector<LinkageStep>& linkage() const { return linkage_; }

    // Binds each domain to the leaf owning its cluster.
    void map_domains(const std::map<std::string, int>& cluster_of_domain);
    void bind_domain(const std::string& domain, int leaf);

    void validate() const;

    friend DomainTree build_manual_tree(const GroupSpec& spec);
    friend DomainTree from_linkage(std::span<const LinkageStep> steps,
                                   std::span<const int> leaf_clusters);
    friend DomainTree tree_from_json(const std::string& text);

private:
    std::map<int, TreeNode> nodes_;
    std::map<std::string, int> leaf_of_domain_;
    std::map<int, int> cluster_of_leaf_;
    std::vector<LinkageStep> linkage_;
    int root_ = -1;
};

// Manual tree construction. Leaves take ids 1..k in spec order, internal
// nodes follow in post-order, so a balanced 4-leaf spec reproduces the
// (1,5,7)/(3,6,7) path numbering of the few-domain layout.
DomainTree build_manual_tree(const GroupSpec& spec);

// Binary tree from k-1 ordered merges over leaves 0..k-1; merge i creates
// node k+i. leaf_clusters[i] is the mixture cluster behind leaf i.
DomainTree from_linkage(std::span<const LinkageStep> steps,
                        std::span<const int> leaf_clusters);

// Leaf -> ... -> root along parent links.
std::vector<int> path_to_leaf(const DomainTree& tree, int leaf);

double average_path_length(const DomainTree& tree);

// One adapter set per node plus the tree-wide shared norm, zero-initialized
// up-projections, bit-deterministic under the seed.
adapters::AdapterStore attach_adapters(const DomainTree& tree, const lm::LmConfig& config,
                                       int bottleneck, std::uint64_t seed);

std::string tree_to_json(const DomainTree& tree);
DomainTree tree_from_json(const std::string& text);
void save_tree(const std::filesystem::path& path, const DomainTree& tree);
DomainTree load_tree(const std::filesystem::path& path);

}  // namespace hieradapt::domtree
