#include "hieradapt/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "hieradapt/errors.hpp"

namespace hieradapt::numcore {

namespace {

void check_eps(double eps) {
    if (!(eps >= 1e-7 && eps <= 1e-3))
        throw ContractError("finite_diff_check: eps must lie in [1e-7, 1e-3]");
}

double eval_scalar(const std::function<Tensor()>& f) {
    const Tensor out = f();
    const double v = out.value();
    if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite evaluation");
    return v;
}

double run_check(const std::function<Tensor()>& f, std::span<const ParamCoord> coords,
                 double eps) {
    check_eps(eps);
    for (const auto& c : coords) {
        Tensor t = c.tensor;
        t.zero_grad();
    }
    std::vector<double> analytic(coords.size());
    {
        Tape tape;
        Tensor loss = f();
        tape.backward(loss);
    }
    for (std::size_t i = 0; i < coords.size(); ++i) {
        Tensor t = coords[i].tensor;
        analytic[i] = t.has_grad() ? t.grad_view()[coords[i].index] : 0.0;
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < coords.size(); ++i) {
        Tensor t = coords[i].tensor;
        double& p = t.data()[coords[i].index];
        const double saved = p;
        p = saved + eps;
        const double up = eval_scalar(f);
        p = saved - eps;
        const double down = eval_scalar(f);
        p = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-12});
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    return worst;
}

}  // namespace

double finite_diff_check(const std::function<Tensor()>& f, Tensor params, double eps) {
    std::vector<ParamCoord> coords(params.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = {params, i};
    return run_check(f, coords, eps);
}

double finite_diff_check_coords(const std::function<Tensor()>& f,
                                std::span<const ParamCoord> coords, double eps) {
    return run_check(f, coords, eps);
}

}  // namespace hieradapt::numcore
