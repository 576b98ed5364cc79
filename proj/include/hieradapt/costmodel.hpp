#pragma once

#include <span>
#include <string>

#include "hieradapt/domtree.hpp"
#include "hieradapt/lm.hpp"

namespace hieradapt::costmodel {

struct CostInputs {
    int n_layers = 0;                // L
    int d_model = 0;
    int bottleneck = 0;              // d
    long long backbone_params = 0;   // N, non-embedding
    double avg_tree_depth = 1.0;     // T
    int n_paths = 1;
    int node_count = 1;
    int path_len = 1;

    void validate() const;
};

// Adapter parameters of one node: L * 2 m d, plus L * (d + m) with biases.
long long adapter_params(int n_layers, int d_model, int bottleneck, bool with_bias);

struct FlopReport {
    double adapter_flops_per_token = 0.0;   // n_paths * T * 4 L d_model d
    double backbone_flops_per_token = 0.0;  // 2 N
    double overhead_ratio = 0.0;
};

FlopReport flops_overhead(const CostInputs& inputs);

// Bottleneck that matches a multi-domain adapter's flops across T nodes:
// round(d_multi / T).
int parity_bottleneck(int d_multi, double avg_tree_depth);

// Multi-domain adapter size at flop parity with a depth-T path of size-d
// adapters: round(d * T).
int parity_multi_size(int bottleneck, double avg_tree_depth);

struct ParamReport {
    long long backbone = 0;
    long long adapters = 0;   // union of path nodes, overlap counted once
    long long shared_ln = 0;  // reported separately
    long long total = 0;      // backbone + adapters
    int unique_nodes = 0;
};

ParamReport inference_param_report(long long backbone_params, const domtree::DomainTree& tree,
                                   std::span<const int> leaves, int n_layers, int d_model,
                                   int bottleneck, bool with_bias);

// Non-embedding parameter count of the backbone architecture.
long long backbone_nonembedding_params(const lm::LmConfig& config);

// One setup of the accounting table: the hierarchical tree against the
// flop-parity multi-domain adapter.
struct CostReport {
    CostInputs inputs;
    int multi_size = 0;
    long long per_node = 0, total = 0, active = 0, multi_total = 0;
    long long per_node_bias = 0, total_bias = 0, active_bias = 0, multi_total_bias = 0;
    long long shared_ln = 0;
    FlopReport hier_flops;
    FlopReport multi_flops;
};

CostReport cost_report(const CostInputs& inputs);
std::string cost_report_text(const CostReport& report);
std::string cost_report_csv(const CostReport& report);

}  // namespace hieradapt::costmodel
