#pragma once

#include <cstdint>
#include <string>

namespace hieradapt::trainer {

enum class Sampling {
    kBalanced,      // domains drawn uniformly at random
    kRoundRobin,    // deterministic domain cycling, exact counter ratios
    kProportional,  // P(domain) proportional to size^alpha
};

enum class Variant {
    kHierarchical,  // one adapter set per tree node, path activation
    kMultiDomain,   // one shared adapter set for all domains
    kSingle,        // one adapter set trained on a single domain
};

struct TrainConfig {
    double lr = 1e-3;
    bool lr_decay = false;  // linear decay to zero over total_steps
    int accum_steps = 2;
    int total_steps = 0;
    int seq_len = 128;
    int batch_size = 4;  // windows per micro-batch
    Sampling sampling = Sampling::kBalanced;
    double oversample_alpha = 0.5;
    std::uint64_t seed = 0;
    Variant variant = Variant::kHierarchical;
    std::string single_domain;  // required when variant == kSingle

    void validate() const;
};

// Constant lr, or linear decay to zero over total_steps when enabled.
inline double effective_lr(const TrainConfig& cfg, int step) {
    if (!cfg.lr_decay || cfg.total_steps <= 0) return cfg.lr;
    return cfg.lr * (1.0 - static_cast<double>(step) / static_cast<double>(cfg.total_steps));
}

}  // namespace hieradapt::trainer
