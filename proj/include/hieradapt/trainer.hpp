#pragma once

#include <map>
#include <string>
#include <vector>

#include "hieradapt/adapters.hpp"
#include "hieradapt/corpus.hpp"
#include "hieradapt/domtree.hpp"
#include "hieradapt/lm.hpp"
#include "hieradapt/optim.hpp"
#include "hieradapt/trainer_config.hpp"

namespace hieradapt::trainer {

struct Batch {
    std::string domain;
    std::vector<std::vector<int>> windows;
};

// Sampling weights over the eligible domains (sorted by name): uniform when
// balanced or alpha = 0, exactly proportional to stream size when alpha = 1.
std::vector<double> domain_weights(const lm::CorpusSet& corpora, const TrainConfig& cfg);

// One batch: a domain drawn by the policy, then batch_size windows from its
// stream. Round-robin uses step_index to cycle domains deterministically.
Batch sample_batch(const lm::CorpusSet& corpora, const TrainConfig& cfg, Rng& rng,
                   long long step_index = 0);

struct UpdateCounters {
    std::map<int, long long> updates_of_node;

    long long of(int node) const;
    std::string to_json() const;
};

struct StepRecord {
    int step = 0;
    std::string domain;
    double loss = 0.0;
    std::vector<int> active_nodes;  // leaf first, root last
};

struct TrainResult {
    UpdateCounters counters;
    std::vector<StepRecord> trace;

    std::string trace_csv() const;
};

// Adapter training against a frozen backbone. Each optimizer step samples
// one domain, activates the adapters on its root-to-leaf path (every node
// for the one-node trees of the multi-domain/single variants), accumulates
// gradients over accum_steps micro-batches of batch_size windows, and
// applies Adam to the active parameters plus the shared layer norm only.
TrainResult train_adapters(const lm::LmModel& backbone, const domtree::DomainTree& tree,
                           adapters::AdapterStore& store, const lm::CorpusSet& corpora,
                           const TrainConfig& cfg);

}  // namespace hieradapt::trainer
