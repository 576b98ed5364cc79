#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hieradapt/ops.hpp"
#include "hieradapt/rng.hpp"
#include "hieradapt/tensor.hpp"

namespace hieradapt::adapters {

// Down/up projection pair of one tree node at one transformer layer.
struct AdapterLayer {
    numcore::Tensor w_down;  // [m, d]
    numcore::Tensor w_up;    // [d, m]
    numcore::Tensor b_down;  // [d]
    numcore::Tensor b_up;    // [m]
};

// One node's adapters across all transformer layers.
struct AdapterParams {
    std::vector<AdapterLayer> layers;
};

// Exactly one gain/bias pair per transformer layer for the whole tree; every
// node's adapter at that layer normalizes through the same tensors.
struct SharedLayerNorm {
    struct Layer {
        numcore::Tensor gain;
        numcore::Tensor bias;
    };
    std::vector<Layer> layers;
};

// W_up zero so the adapted model starts exactly at the backbone; W_down gets
// a small Gaussian so gradients break symmetry immediately.
AdapterParams make_adapter_params(int n_layers, int d_model, int bottleneck, Rng& rng);
SharedLayerNorm make_shared_layer_norm(int n_layers, int d_model);

// The residual branch alone: up(ReLU(down(LN(h)))).
numcore::Tensor adapter_branch(const numcore::Tensor& h, const AdapterParams& node,
                               int layer, const SharedLayerNorm& ln,
                               double eps = numcore::kLayerNormEps);

// Residual bottleneck: branch(h) + h.
numcore::Tensor adapter_forward(const numcore::Tensor& h, const AdapterParams& node,
                                int layer, const SharedLayerNorm& ln,
                                double eps = numcore::kLayerNormEps);

// Arithmetic mean of the node outputs on a common input, evaluated as
// h + mean(branches) so that zero-initialized adapters return h bit-exactly.
numcore::Tensor node_average(const numcore::Tensor& h,
                             std::span<const AdapterParams* const> nodes, int layer,
                             const SharedLayerNorm& ln,
                             double eps = numcore::kLayerNormEps);

// L * (2 m d) parameters per node, plus L * (d + m) when biases count.
std::size_t params_per_node(int n_layers, int d_model, int bottleneck, bool with_bias);

// Adapters for a set of tree nodes plus the tree-wide shared norm.
struct AdapterStore {
    int n_layers = 0;
    int d_model = 0;
    int bottleneck = 0;
    std::map<int, AdapterParams> nodes;  // keyed by tree node id
    SharedLayerNorm shared;

    const AdapterParams& node(int id) const;
    AdapterParams& node(int id);
    std::vector<std::pair<std::string, numcore::Tensor>> named_parameters() const;
    std::uint64_t checksum() const;
    std::uint64_t node_checksum(int id) const;
    std::size_t total_params(bool with_bias) const;  // adapters only, no norm
    std::size_t shared_ln_params() const;
};

void save_adapter_store(const std::filesystem::path& path, const AdapterStore& store);
AdapterStore load_adapter_store(const std::filesystem::path& path);

}  // namespace hieradapt::adapters
