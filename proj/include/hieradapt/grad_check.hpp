#pragma once

#include <functional>
#include <span>
#include <vector>

#include "hieradapt/tensor.hpp"

namespace hieradapt::numcore {

// One parameter coordinate inside a tensor, for sampled gradient checks.
struct ParamCoord {
    Tensor tensor;
    std::size_t index = 0;
};

// Compares backward gradients against central finite differences for every
// coordinate of `params`. `f` rebuilds the scalar loss from current parameter
// values; it is run once under a tape for the analytic side and twice per
// coordinate without one. Returns the worst relative error, with denominator
// max(|analytic|, |numeric|, 1e-12).
double finite_diff_check(const std::function<Tensor()>& f, Tensor params, double eps);

// Same check restricted to an explicit coordinate sample.
double finite_diff_check_coords(const std::function<Tensor()>& f,
                                std::span<const ParamCoord> coords, double eps);

}  // namespace hieradapt::numcore
