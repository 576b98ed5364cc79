#include "hieradapt/costmodel.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "hieradapt/adapters.hpp"
#include "hieradapt/errors.hpp"

namespace hieradapt::costmodel {

namespace {

std::string millions(long long v) {
    std::ostringstream out;
    out << std::fixed;
    out.precision(1);
    out << static_cast<double>(v) / 1e6 << "M";
    return out.str();
}

}  // namespace

void CostInputs::validate() const {
    if (n_layers < 1 || d_model < 1 || bottleneck < 0)
        throw ConfigError("cost: layers, d_model and adapter size must be positive");
    if (backbone_params < 1) throw ConfigError("cost: backbone parameter count must be positive");
    if (avg_tree_depth < 1.0) throw ConfigError("cost: average tree depth must be >= 1");
    if (n_paths < 1 || node_count < 1 || path_len < 1)
        throw ConfigError("cost: paths, nodes and path length must be positive");
}

long long adapter_params(int n_layers, int d_model, int bottleneck, bool with_bias) {
    if (n_layers < 1 || d_model < 1 || bottleneck < 1)
        throw ConfigError("adapter_params: arguments must be positive");
    return static_cast<long long>(
        adapters::params_per_node(n_layers, d_model, bottleneck, with_bias));
}

FlopReport flops_overhead(const CostInputs& in) {
    FlopReport out;
    out.adapter_flops_per_token = static_cast<double>(in.n_paths) * in.avg_tree_depth * 4.0 *
                                  in.n_layers * in.d_model * in.bottleneck;
    out.backbone_flops_per_token = 2.0 * static_cast<double>(in.backbone_params);
    out.overhead_ratio = out.adapter_flops_per_token / out.backbone_flops_per_token;
    return out;
}

int parity_bottleneck(int d_multi, double avg_tree_depth) {
    if (avg_tree_depth < 1.0) throw ConfigError("parity: tree depth must be >= 1");
    if (static_cast<double>(d_multi) < avg_tree_depth)
        throw ConfigError("parity: multi-domain size must be at least the tree depth");
    const int d = static_cast<int>(std::llround(static_cast<double>(d_multi) / avg_tree_depth));
    if (d < 1) throw ConfigError("parity: resulting bottleneck is below 1");
    return d;
}

int parity_multi_size(int bottleneck, double avg_tree_depth) {
    if (bottleneck < 1 || avg_tree_depth < 1.0)
        throw ConfigError("parity: bottleneck and depth must be positive");
    return static_cast<int>(std::llround(bottleneck * avg_tree_depth));
}

ParamReport inference_param_report(long long backbone_params, const domtree::DomainTree& tree,
                                   std::span<const int> leaves, int n_layers, int d_model,
                                   int bottleneck, bool with_bias) {
    if (leaves.empty()) throw ContractError("inference_param_report: no paths");
    std::set<int> unique;
    for (int leaf : leaves)
        for (int id : domtree::path_to_leaf(tree, leaf)) unique.insert(id);
    ParamReport out;
    out.backbone = backbone_params;
    out.unique_nodes = static_cast<int>(unique.size());
    out.adapters = static_cast<long long>(unique.size()) *
                   adapter_params(n_layers, d_model, bottleneck, with_bias);
    out.shared_ln = 2LL * n_layers * d_model;
    out.total = out.backbone + out.adapters;
    return out;
}

long long backbone_nonembedding_params(const lm::LmConfig& config) {
    config.validate();
    const long long m = config.d_model;
    // Per layer: two norms, four attention projections with biases, and the
    // 4x feed-forward pair; plus the final norm.
    const long long per_layer = 4 * m + (4 * m * m + 4 * m) + (8 * m * m + 5 * m);
    return config.n_layers * per_layer + 2 * m;
}

CostReport cost_report(const CostInputs& in) {
    in.validate();
    CostReport r;
    r.inputs = in;
    r.per_node = adapter_params(in.n_layers, in.d_model, in.bottleneck, false);
    r.per_node_bias = adapter_params(in.n_layers, in.d_model, in.bottleneck, true);
    r.total = r.per_node * in.node_count;
    r.total_bias = r.per_node_bias * in.node_count;
    r.active = r.per_node * in.path_len * in.n_paths;
    r.active_bias = r.per_node_bias * in.path_len * in.n_paths;
    r.multi_size = parity_multi_size(in.bottleneck, in.avg_tree_depth);
    r.multi_total = adapter_params(in.n_layers, in.d_model, r.multi_size, false);
    r.multi_total_bias = adapter_params(in.n_layers, in.d_model, r.multi_size, true);
    r.shared_ln = 2LL * in.n_layers * in.d_model;
    r.hier_flops = flops_overhead(in);
    CostInputs multi_in = in;
    multi_in.bottleneck = r.multi_size;
    multi_in.avg_tree_depth = 1.0;
    multi_in.node_count = 1;
    multi_in.path_len = 1;
    r.multi_flops = flops_overhead(multi_in);
    return r;
}

std::string cost_report_text(const CostReport& r) {
    std::ostringstream out;
    out << "setup: L=" << r.inputs.n_layers << " d_model=" << r.inputs.d_model
        << " N=" << millions(r.inputs.backbone_params) << " paths=" << r.inputs.n_paths
        << "\n\n";
    out << "                            hierarchical        multi-domain (flop parity)\n";
    auto line = [&](const char* label, const std::string& a, const std::string& b) {
        out << label;
        for (std::size_t i = std::string(label).size(); i < 28; ++i) out << ' ';
        out << a;
        for (std::size_t i = a.size(); i < 20; ++i) out << ' ';
        out << b << "\n";
    };
    line("adapter size", std::to_string(r.inputs.bottleneck), std::to_string(r.multi_size));
    line("adapters", std::to_string(r.inputs.node_count), "1");
    {
        std::ostringstream t;
        t.precision(3);
        t << r.inputs.avg_tree_depth;
        line("average path length", t.str(), "1");
    }
    line("total parameters", millions(r.total) + " (" + std::to_string(r.total) + ")",
         millions(r.multi_total) + " (" + std::to_string(r.multi_total) + ")");
    line("active parameters", millions(r.active) + " (" + std::to_string(r.active) + ")",
         millions(r.multi_total) + " (" + std::to_string(r.multi_total) + ")");
    line("total w/ biases", millions(r.total_bias), millions(r.multi_total_bias));
    line("active w/ biases", millions(r.active_bias), millions(r.multi_total_bias));
    line("shared layer-norm params", std::to_string(r.shared_ln), std::to_string(r.shared_ln));
    {
        std::ostringstream a, b;
        a.precision(3);
        b.precision(3);
        a << 100.0 * r.hier_flops.overhead_ratio << "%";
        b << 100.0 * r.multi_flops.overhead_ratio << "%";
        line("flop overhead vs backbone", a.str(), b.str());
    }
    return out.str();
}

std::string cost_report_csv(const CostReport& r) {
    std::ostringstream out;
    out.precision(17);
    out << "metric,hierarchical,multi_domain\n";
    out << "adapter_size," << r.inputs.bottleneck << ',' << r.multi_size << "\n";
    out << "adapters," << r.inputs.node_count << ",1\n";
    out << "average_path_length," << r.inputs.avg_tree_depth << ",1\n";
    out << "total_params," << r.total << ',' << r.multi_total << "\n";
    out << "active_params," << r.active << ',' << r.multi_total << "\n";
    out << "total_params_with_bias," << r.total_bias << ',' << r.multi_total_bias << "\n";
    out << "active_params_with_bias," << r.active_bias << ',' << r.multi_total_bias << "\n";
    out << "shared_ln_params," << r.shared_ln << ',' << r.shared_ln << "\n";
    out << "adapter_flops_per_token," << r.hier_flops.adapter_flops_per_token << ','
        << r.multi_flops.adapter_flops_per_token << "\n";
    out << "backbone_flops_per_token," << r.hier_flops.backbone_flops_per_token << ','
        << r.multi_flops.backbone_flops_per_token << "\n";
    out << "flop_overhead_ratio," << r.hier_flops.overhead_ratio << ','
        << r.multi_flops.overhead_ratio << "\n";
    return out.str();
}

}  // namespace hieradapt::costmodel
