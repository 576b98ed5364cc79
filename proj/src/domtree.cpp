#include "hieradapt/domtree.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

#include "hieradapt/errors.hpp"
#include "hieradapt/serial.hpp"

namespace hieradapt::domtree {

GroupSpec GroupSpec::leaf(std::string name) {
    GroupSpec s;
    s.domain = std::move(name);
    return s;
}

GroupSpec GroupSpec::group(std::vector<GroupSpec> children) {
    GroupSpec s;
    s.groups = std::move(children);
    return s;
}

namespace {

GroupSpec parse_spec_at(const std::string& text, std::size_t& pos) {
    auto skip_ws = [&]() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    };
    skip_ws();
    if (pos >= text.size()) throw ValidationError("tree spec: unexpected end of input");
    if (text[pos] == '(') {
        ++pos;
        std::vector<GroupSpec> children;
        while (true) {
            children.push_back(parse_spec_at(text, pos));
            skip_ws();
            if (pos >= text.size()) throw ValidationError("tree spec: missing ')'");
            if (text[pos] == ',') {
                ++pos;
                continue;
            }
            if (text[pos] == ')') {
                ++pos;
                break;
            }
            throw ValidationError("tree spec: expected ',' or ')'");
        }
        // A group of one is just its member.
        if (children.size() == 1) return children[0];
        return GroupSpec::group(std::move(children));
    }
    const std::size_t start = pos;
    while (pos < text.size() && text[pos] != ',' && text[pos] != ')' && text[pos] != '(' &&
           !std::isspace(static_cast<unsigned char>(text[pos])))
        ++pos;
    if (pos == start) throw ValidationError("tree spec: empty domain name");
    return GroupSpec::leaf(text.substr(start, pos - start));
}

void collect_leaves(const GroupSpec& spec, std::vector<const GroupSpec*>& leaves) {
    if (spec.is_leaf()) {
        leaves.push_back(&spec);
        return;
    }
    for (const auto& child : spec.groups) collect_leaves(child, leaves);
}

}  // namespace

GroupSpec parse_group_spec(const std::string& text) {
    std::size_t pos = 0;
    GroupSpec spec = parse_spec_at(text, pos);
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    if (pos != text.size()) throw ValidationError("tree spec: trailing characters");
    return spec;
}

const TreeNode& DomainTree::node(int id) const {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw ValidationError("tree has no node " + std::to_string(id));
    return it->second;
}

bool DomainTree::has_node(int id) const { return nodes_.count(id) > 0; }

std::vector<int> DomainTree::node_ids() const {
    std::vector<int> ids;
    ids.reserve(nodes_.size());
    for (const auto& [id, _] : nodes_) ids.push_back(id);
    return ids;
}

std::vector<int> DomainTree::leaf_ids() const {
    std::vector<int> ids;
    for (const auto& [id, n] : nodes_)
        if (n.is_leaf()) ids.push_back(id);
    return ids;
}

int DomainTree::leaf_for_domain(const std::string& domain) const {
    auto it = leaf_of_domain_.find(domain);
    if (it == leaf_of_domain_.end())
        throw ValidationError("tree maps no leaf for domain: " + domain);
    return it->second;
}

int DomainTree::leaf_for_cluster(int cluster) const {
    for (const auto& [leaf, c] : cluster_of_leaf_)
        if (c == cluster) return leaf;
    throw ValidationError("tree maps no leaf for cluster " + std::to_string(cluster));
}

void DomainTree::map_domains(const std::map<std::string, int>& cluster_of_domain) {
    for (const auto& [domain, cluster] : cluster_of_domain)
        bind_domain(domain, leaf_for_cluster(cluster));
}

void DomainTree::bind_domain(const std::string& domain, int leaf) {
    if (!node(leaf).is_leaf())
        throw ValidationError("cannot bind domain to internal node " + std::to_string(leaf));
    auto [it, inserted] = leaf_of_domain_.emplace(domain, leaf);
    if (!inserted && it->second != leaf)
        throw ValidationError("domain already bound to a different leaf: " + domain);
}

void DomainTree::validate() const {
    if (nodes_.empty()) throw ValidationError("tree has no nodes");
    int roots = 0;
    for (const auto& [id, n] : nodes_) {
        if (n.id != id) throw ValidationError("tree node id mismatch");
        if (!n.parent) {
            ++roots;
            if (id != root_) throw ValidationError("tree root is inconsistent");
        } else {
            const TreeNode& p = node(*n.parent);
            if (std::find(p.children.begin(), p.children.end(), id) == p.children.end())
                throw ValidationError("child/parent links are inconsistent");
        }
        for (int c : n.children)
            if (!node(c).parent || *node(c).parent != id)
                throw ValidationError("child/parent links are inconsistent");
    }
    if (roots != 1) throw ValidationError("tree must have exactly one root");
    // Reachability from the root covers acyclicity for consistent links.
    std::set<int> seen;
    std::vector<int> stack{root_};
    while (!stack.empty()) {
        const int id = stack.back();
        stack.pop_back();
        if (!seen.insert(id).second) throw ValidationError("tree contains a cycle");
        for (int c : node(id).children) stack.push_back(c);
    }
    if (seen.size() != nodes_.size())
        throw ValidationError("tree has nodes unreachable from the root");
    for (const auto& [domain, leaf] : leaf_of_domain_)
        if (!node(leaf).is_leaf())
            throw ValidationError("domain bound to internal node: " + domain);
    for (const auto& [leaf, _] : cluster_of_leaf_)
        if (!node(leaf).is_leaf())
            throw ValidationError("cluster bound to internal node " + std::to_string(leaf));
}

DomainTree build_manual_tree(const GroupSpec& spec) {
    std::vector<const GroupSpec*> leaves;
    collect_leaves(spec, leaves);
    if (leaves.empty()) throw ValidationError("tree spec has no domains");
    std::set<std::string> names;
    for (const auto* leaf : leaves) {
        if (leaf->domain.empty()) throw ValidationError("tree spec: empty domain name");
        if (!names.insert(leaf->domain).second)
            throw ValidationError("duplicate domain in tree spec: " + leaf->domain);
    }

    DomainTree tree;
    // Leaves are numbered 1..k in spec order, internal nodes in post-order.
    int next_leaf = 1;
    int next_internal = static_cast<int>(leaves.size()) + 1;
    auto build = [&](auto&& self, const GroupSpec& g) -> int {
        if (g.is_leaf()) {
            const int id = next_leaf++;
            TreeNode n;
            n.id = id;
            tree.nodes_.emplace(id, std::move(n));
            tree.leaf_of_domain_.emplace(g.domain, id);
            return id;
        }
        std::vector<int> children;
        children.reserve(g.groups.size());
        for (const auto& child : g.groups) children.push_back(self(self, child));
        const int id = next_internal++;
        TreeNode n;
        n.id = id;
        n.children = children;
        tree.nodes_.emplace(id, std::move(n));
        for (int c : children) tree.nodes_.at(c).parent = id;
        return id;
    };
    tree.root_ = build(build, spec);
    tree.validate();
    return tree;
}

DomainTree from_linkage(std::span<const LinkageStep> steps,
                        std::span<const int> leaf_clusters) {
    const int k = static_cast<int>(leaf_clusters.size());
    if (k < 1) throw ValidationError("linkage: need at least one leaf");
    if (steps.size() + 1 != static_cast<std::size_t>(k))
        throw ValidationError("linkage: " + std::to_string(steps.size()) +
                              " merges cannot join " + std::to_string(k) + " leaves");
    DomainTree tree;
    for (int i = 0; i < k; ++i) {
        TreeNode n;
        n.id = i;
        tree.nodes_.emplace(i, std::move(n));
        tree.cluster_of_leaf_.emplace(i, leaf_clusters[static_cast<std::size_t>(i)]);
    }
    std::set<int> open;
    for (int i = 0; i < k; ++i) open.insert(i);
    int next_id = k;
    for (const auto& step : steps) {
        if (!open.erase(step.left))
            throw ValidationError("linkage: cluster " + std::to_string(step.left) +
                                  " reused after merge");
        if (!open.erase(step.right))
            throw ValidationError("linkage: cluster " + std::to_string(step.right) +
                                  " reused after merge");
        if (step.new_id != next_id)
            throw ValidationError("linkage: merge ids must be consecutive");
        TreeNode n;
        n.id = next_id;
        n.children = {step.left, step.right};
        tree.nodes_.emplace(next_id, std::move(n));
        tree.nodes_.at(step.left).parent = next_id;
        tree.nodes_.at(step.right).parent = next_id;
        open.insert(next_id);
        ++next_id;
    }
    if (open.size() != 1) throw ValidationError("linkage: merges do not form one tree");
    tree.root_ = *open.begin();
    tree.linkage_.assign(steps.begin(), steps.end());
    tree.validate();
    return tree;
}

std::vector<int> path_to_leaf(const DomainTree& tree, int leaf) {
    const TreeNode* n = &tree.node(leaf);
    if (!n->is_leaf())
        throw ContractError("path_to_leaf: node " + std::to_string(leaf) + " is internal");
    std::vector<int> path{leaf};
    while (n->parent) {
        path.push_back(*n->parent);
        n = &tree.node(*n->parent);
    }
    return path;
}

double average_path_length(const DomainTree& tree) {
    const auto leaves = tree.leaf_ids();
    if (leaves.empty()) throw ValidationError("tree has no leaves");
    std::size_t total = 0;
    for (int leaf : leaves) total += path_to_leaf(tree, leaf).size();
    return static_cast<double>(total) / static_cast<double>(leaves.size());
}

adapters::AdapterStore attach_adapters(const DomainTree& tree, const lm::LmConfig& config,
                                       int bottleneck, std::uint64_t seed) {
    if (bottleneck < 1) throw ConfigError("attach_adapters: bottleneck must be >= 1");
    adapters::AdapterStore store;
    store.n_layers = config.n_layers;
    store.d_model = config.d_model;
    store.bottleneck = bottleneck;
    Rng rng(Rng::derive(seed, 0xad));
    for (int id : tree.node_ids())
        store.nodes.emplace(
            id, adapters::make_adapter_params(config.n_layers, config.d_model, bottleneck, rng));
    store.shared = adapters::make_shared_layer_norm(config.n_layers, config.d_model);
    return store;
}

std::string tree_to_json(const DomainTree& tree) {
    nlohmann::json doc;
    doc["nodes"] = nlohmann::json::array();
    for (int id : tree.node_ids()) {
        const TreeNode& n = tree.node(id);
        nlohmann::json jn;
        jn["id"] = n.id;
        if (n.parent) jn["parent"] = *n.parent;
        else jn["parent"] = nullptr;
        jn["children"] = n.children;
        doc["nodes"].push_back(jn);
    }
    doc["leaf_of_domain"] = nlohmann::json::object();
    for (const auto& [domain, leaf] : tree.leaf_of_domain()) doc["leaf_of_domain"][domain] = leaf;
    doc["cluster_of_leaf"] = nlohmann::json::object();
    for (const auto& [leaf, cluster] : tree.cluster_of_leaf())
        doc["cluster_of_leaf"][std::to_string(leaf)] = cluster;
    doc["linkage"] = nlohmann::json::array();
    for (const auto& step : tree.linkage()) {
        nlohmann::json js;
        js["left"] = step.left;
        js["right"] = step.right;
        js["new_id"] = step.new_id;
        js["height"] = step.height;
        js["size"] = step.size;
        doc["linkage"].push_back(js);
    }
    return doc.dump(2) + "\n";
}

DomainTree tree_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("tree file is not valid JSON: ") + e.what());
    }
    DomainTree tree;
    for (const auto& jn : doc.at("nodes")) {
        TreeNode n;
        n.id = jn.at("id").get<int>();
        if (!jn.at("parent").is_null()) n.parent = jn.at("parent").get<int>();
        else tree.root_ = n.id;
        n.children = jn.at("children").get<std::vector<int>>();
        tree.nodes_.emplace(n.id, std::move(n));
    }
    for (const auto& [domain, leaf] : doc.at("leaf_of_domain").items())
        tree.leaf_of_domain_.emplace(domain, leaf.get<int>());
    for (const auto& [leaf, cluster] : doc.at("cluster_of_leaf").items())
        tree.cluster_of_leaf_.emplace(std::stoi(leaf), cluster.get<int>());
    for (const auto& js : doc.at("linkage")) {
        LinkageStep step;
        step.left = js.at("left").get<int>();
        step.right = js.at("right").get<int>();
        step.new_id = js.at("new_id").get<int>();
        step.height = js.at("height").get<double>();
        step.size = js.at("size").get<int>();
        tree.linkage_.push_back(step);
    }
    tree.validate();
    return tree;
}

void save_tree(const std::filesystem::path& path, const DomainTree& tree) {
    io::atomic_write_file(path, tree_to_json(tree));
}

DomainTree load_tree(const std::filesystem::path& path) {
    return tree_from_json(io::read_file(path));
}

}  // namespace hieradapt::domtree
