#include "hieradapt/trainer.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "hieradapt/errors.hpp"
#include "hieradapt/ops.hpp"

namespace hieradapt::trainer {

namespace {

std::vector<std::string> eligible_domains(const lm::CorpusSet& corpora,
                                          const TrainConfig& cfg) {
    if (cfg.variant == Variant::kSingle) {
        if (corpora.domains.find(cfg.single_domain) == corpora.domains.end())
            throw ConfigError("single variant: corpus has no domain '" + cfg.single_domain +
                              "'");
        return {cfg.single_domain};
    }
    return corpora.domain_names();
}

// Adam state mirroring the adapter store layout.
struct OptStates {
    std::map<int, std::vector<std::array<AdamState, 4>>> per_node;
    std::vector<std::array<AdamState, 2>> shared;
};

void update_tensor(numcore::Tensor t, AdamState& state, const AdamHyper& hp) {
    if (t.has_grad()) {
        adam_step(t, t.grad(), state, hp);
        t.zero_grad();
    } else {
        // No gradient this step means a zero gradient: moments still decay.
        std::vector<double> zeros(t.size(), 0.0);
        adam_step(t, zeros, state, hp);
    }
}

}  // namespace

std::vector<double> domain_weights(const lm::CorpusSet& corpora, const TrainConfig& cfg) {
    const auto names = eligible_domains(corpora, cfg);
    std::vector<double> w(names.size(), 1.0);
    if (cfg.sampling == Sampling::kProportional) {
        for (std::size_t i = 0; i < names.size(); ++i)
            w[i] = std::pow(static_cast<double>(corpora.stream(names[i]).size()),
                            cfg.oversample_alpha);
    }
    double total = 0.0;
    for (double v : w) total += v;
    for (double& v : w) v /= total;
    return w;
}

Batch sample_batch(const lm::CorpusSet& corpora, const TrainConfig& cfg, Rng& rng,
                   long long step_index) {
    const auto names = eligible_domains(corpora, cfg);
    if (names.empty()) throw DataError("sample_batch: no domains");
    std::size_t pick = 0;
    switch (cfg.sampling) {
        case Sampling::kRoundRobin:
            pick = static_cast<std::size_t>(step_index) % names.size();
            break;
        case Sampling::kBalanced:
            pick = rng.uniform_index(names.size());
            break;
        case Sampling::kProportional: {
            const auto w = domain_weights(corpora, cfg);
            const double target = rng.uniform();
            double acc = 0.0;
            pick = names.size() - 1;
            for (std::size_t i = 0; i < names.size(); ++i) {
                acc += w[i];
                if (target < acc) {
                    pick = i;
                    break;
                }
            }
            break;
        }
    }
    Batch batch;
    batch.domain = names[pick];
    const auto& stream = corpora.stream(batch.domain);
    batch.windows.reserve(static_cast<std::size_t>(cfg.batch_size));
    for (int i = 0; i < cfg.batch_size; ++i)
        batch.windows.push_back(lm::sample_window(stream, cfg.seq_len, rng, batch.domain));
    return batch;
}

long long UpdateCounters::of(int node) const {
    auto it = updates_of_node.find(node);
    return it == updates_of_node.end() ? 0 : it->second;
}

std::string UpdateCounters::to_json() const {
    nlohmann::json doc = nlohmann::json::object();
    for (const auto& [node, count] : updates_of_node) doc[std::to_string(node)] = count;
    return doc.dump(2) + "\n";
}

std::string TrainResult::trace_csv() const {
    std::ostringstream out;
    out << "step,domain,loss,active_nodes\n";
    out.precision(17);
    for (const auto& rec : trace) {
        out << rec.step << ',' << rec.domain << ',' << rec.loss << ',';
        for (std::size_t i = 0; i < rec.active_nodes.size(); ++i) {
            if (i) out << ';';
            out << rec.active_nodes[i];
        }
        out << "\n";
    }
    return out.str();
}

TrainResult train_adapters(const lm::LmModel& backbone, const domtree::DomainTree& tree,
                           adapters::AdapterStore& store, const lm::CorpusSet& corpora,
                           const TrainConfig& cfg) {
    cfg.validate();
    if (!backbone.defined()) throw ContractError("train_adapters: undefined backbone");
    if (store.n_layers != backbone.config().n_layers ||
        store.d_model != backbone.config().d_model)
        throw ConfigError("train_adapters: adapter store does not match the backbone");
    const auto names = eligible_domains(corpora, cfg);
    for (const auto& name : names) tree.leaf_for_domain(name);  // must all be mapped

    // The backbone stays frozen: no gradients, and it never enters the
    // optimizer. Tensor handles share storage, so the flag flips in place.
    for (auto& [name, t] : backbone.named_parameters()) {
        numcore::Tensor tt = t;
        tt.set_requires_grad(false);
    }

    TrainResult result;
    for (int id : tree.node_ids()) result.counters.updates_of_node[id] = 0;

    OptStates states;
    for (const auto& [id, node] : store.nodes)
        states.per_node[id].resize(node.layers.size());
    states.shared.resize(store.shared.layers.size());

    AdamHyper hp;
    Rng rng(Rng::derive(cfg.seed, 0x7472));
    const int windows_per_step = cfg.batch_size * cfg.accum_steps;
    const double scale = 1.0 / static_cast<double>(windows_per_step);

    for (int step = 0; step < cfg.total_steps; ++step) {
        hp.lr = effective_lr(cfg, step);
        Batch first = sample_batch(corpora, cfg, rng, step);
        const int leaf = tree.leaf_for_domain(first.domain);
        const std::vector<int> path = domtree::path_to_leaf(tree, leaf);
        std::vector<const adapters::AdapterParams*> path_nodes;
        path_nodes.reserve(path.size());
        for (int id : path) path_nodes.push_back(&store.node(id));
        lm::AdapterHook hook = [&](const numcore::Tensor& h, int layer) {
            return adapters::node_average(h, path_nodes, layer, store.shared);
        };

        double step_loss = 0.0;
        std::vector<std::vector<int>> windows = std::move(first.windows);
        const auto& stream = corpora.stream(first.domain);
        while (windows.size() < static_cast<std::size_t>(windows_per_step))
            windows.push_back(lm::sample_window(stream, cfg.seq_len, rng, first.domain));
        for (const auto& window : windows) {
            try {
                numcore::Tape tape;
                numcore::Tensor loss = lm::window_loss(backbone, window, hook);
                step_loss += loss.value() * scale;
                tape.backward(loss, scale);
            } catch (const NumericError& e) {
                throw NumericError("training aborted at step " + std::to_string(step) +
                                   " on domain '" + first.domain + "': " + e.what());
            }
        }

        for (int id : path) {
            auto& node = store.node(id);
            auto& node_states = states.per_node.at(id);
            for (std::size_t l = 0; l < node.layers.size(); ++l) {
                update_tensor(node.layers[l].w_down, node_states[l][0], hp);
                update_tensor(node.layers[l].b_down, node_states[l][1], hp);
                update_tensor(node.layers[l].w_up, node_states[l][2], hp);
                update_tensor(node.layers[l].b_up, node_states[l][3], hp);
            }
            result.counters.updates_of_node[id] += 1;
        }
        // The shared norm sits on every path, so it updates every step.
        for (std::size_t l = 0; l < store.shared.layers.size(); ++l) {
            update_tensor(store.shared.layers[l].gain, states.shared[l][0], hp);
            update_tensor(store.shared.layers[l].bias, states.shared[l][1], hp);
        }

        StepRecord rec;
        rec.step = step;
        rec.domain = first.domain;
        rec.loss = step_loss;
        rec.active_nodes = path;
        result.trace.push_back(std::move(rec));
    }
    return result;
}

}  // namespace hieradapt::trainer
