#pragma once

#include <span>
#include <vector>

#include "hieradapt/tensor.hpp"

namespace hieradapt::trainer {

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Per-tensor Adam state. The step counter advances only when this tensor is
// updated, so rarely-active parameters keep their own bias correction.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long long t = 0;
};

// One bias-corrected Adam update of `params` in place. State buffers are
// allocated on first use and must match the parameter shape afterwards.
void adam_step(numcore::Tensor params, std::span<const double> grads, AdamState& state,
               const AdamHyper& hp);

}  // namespace hieradapt::trainer
