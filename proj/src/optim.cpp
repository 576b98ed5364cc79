#include "hieradapt/optim.hpp"

#include <cmath>

#include "hieradapt/errors.hpp"
#include "hieradapt/trainer_config.hpp"

namespace hieradapt::trainer {

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
    if (accum_steps < 1) throw ConfigError("train: accum_steps must be >= 1");
    if (total_steps < 0) throw ConfigError("train: total_steps must be >= 0");
    if (seq_len < 2) throw ConfigError("train: seq_len must be >= 2");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (oversample_alpha < 0.0 || oversample_alpha > 1.0)
        throw ConfigError("train: oversample alpha must lie in [0, 1]");
    if (variant == Variant::kSingle && single_domain.empty())
        throw ConfigError("train: single variant requires a domain name");
}

void adam_step(numcore::Tensor params, std::span<const double> grads, AdamState& state,
               const AdamHyper& hp) {
    const std::size_t n = params.size();
    if (grads.size() != n) throw ContractError("adam_step: grad size does not match params");
    if (state.m.empty()) {
        state.m.assign(n, 0.0);
        state.v.assign(n, 0.0);
    }
    if (state.m.size() != n || state.v.size() != n)
        throw ContractError("adam_step: state shape does not match params");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
    auto pv = params.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grads[i];
        state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
        state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        pv[i] -= hp.lr * mhat / (std::sqrt(vhat) + hp.eps);
    }
}

}  // namespace hieradapt::trainer
