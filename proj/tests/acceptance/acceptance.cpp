// Acceptance suite: runs every release criterion end to end and prints one
// pass/fail line per criterion. Exit code is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hieradapt/clustering.hpp"
#include "hieradapt/costmodel.hpp"
#include "hieradapt/domtree.hpp"
#include "hieradapt/grad_check.hpp"
#include "hieradapt/lm.hpp"
#include "hieradapt/routing.hpp"
#include "hieradapt/trainer.hpp"
#include "support/oracles.hpp"
#include "support/synth.hpp"

using namespace hieradapt;

namespace {

constexpr std::uint64_t kSeed = 20240717;

struct Check {
    std::vector<std::string> failures;

    void expect(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
    template <typename T>
    void expect_le(T value, T bound, const std::string& what) {
        if (!(value <= bound)) {
            std::ostringstream msg;
            msg.precision(12);
            msg << what << " (got " << value << ", bound " << bound << ")";
            failures.push_back(msg.str());
        }
    }
    void expect_near(double value, double target, double tol, const std::string& what) {
        if (!(std::abs(value - target) <= tol)) {
            std::ostringstream msg;
            msg.precision(12);
            msg << what << " (got " << value << ", want " << target << " +- " << tol << ")";
            failures.push_back(msg.str());
        }
    }
};

// ---------------------------------------------------------------------------
// Shared fixture: synthetic corpora, pretrained backbone, trained variants.
// Built once, on first use, by the criteria that need it.

struct EvalKey {
    std::string variant;
    int path_leaf;
    std::string domain;
    bool operator<(const EvalKey& o) const {
        return std::tie(variant, path_leaf, domain) < std::tie(o.variant, o.path_leaf, o.domain);
    }
};

struct Fixture {
    lm::LmConfig lm_cfg;
    lm::CorpusSet corpora;
    lm::LmModel backbone;
    std::uint64_t backbone_checksum = 0;

    domtree::DomainTree manual_tree;
    adapters::AdapterStore hier_store;
    adapters::AdapterStore multi_store;
    domtree::DomainTree one_node_tree;
    std::map<std::string, adapters::AdapterStore> single_stores;

    std::map<EvalKey, double> ppl;  // filled by criterion 5
    bool freeze_ok = false;
    bool zero_init_ok = false;
};

constexpr int kTrainSteps = 2000;
constexpr int kSeqLen = 64;
constexpr int kBottleneck = 12;
constexpr long long kEvalTokens = 6400;

trainer::TrainConfig adapter_train_config(trainer::Variant variant,
                                          const std::string& single_domain = "") {
    trainer::TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.total_steps = kTrainSteps;
    cfg.seq_len = kSeqLen;
    cfg.batch_size = 1;
    cfg.accum_steps = 1;
    cfg.sampling = trainer::Sampling::kBalanced;
    cfg.seed = kSeed;
    cfg.variant = variant;
    cfg.single_domain = single_domain;
    return cfg;
}

std::span<const int> eval_stream(const lm::CorpusSet& corpora, const std::string& domain) {
    const auto& stream = corpora.stream(domain);
    const auto n = std::min<std::size_t>(stream.size(), kEvalTokens);
    return {stream.data(), n};
}

Fixture& fixture() {
    static std::optional<Fixture> fx;
    if (fx) return *fx;
    fx.emplace();
    fx->lm_cfg.n_layers = 2;
    fx->lm_cfg.d_model = 64;
    fx->lm_cfg.n_heads = 2;
    fx->lm_cfg.context_len = 128;
    fx->lm_cfg.vocab_size = 260;

    fx->corpora = lm::CorpusSet::from_text(synth::four_distinct_domains(600, kSeed));

    trainer::TrainConfig pre;
    pre.total_steps = 2000;
    pre.seq_len = kSeqLen;
    pre.batch_size = 2;
    pre.accum_steps = 1;
    pre.seed = kSeed;
    fx->backbone = lm::pretrain(fx->corpora, fx->lm_cfg, pre).model;
    fx->backbone_checksum = fx->backbone.checksum();

    fx->manual_tree = domtree::build_manual_tree(
        domtree::parse_group_spec("((alpha,bravo),(charlie,delta))"));
    fx->one_node_tree = domtree::build_manual_tree(domtree::GroupSpec::leaf("shared"));
    for (const auto& name : fx->corpora.domain_names())
        fx->one_node_tree.bind_domain(name, fx->one_node_tree.root());
    return *fx;
}

double path_perplexity(const Fixture& fx, const domtree::DomainTree& tree,
                       const adapters::AdapterStore& store, int leaf,
                       const std::string& domain) {
    std::vector<int> leaves{leaf};
    const auto hook = routing::multi_path_hook(tree, store, leaves);
    return routing::evaluate_perplexity(fx.backbone, hook, eval_stream(fx.corpora, domain),
                                        kSeqLen)
        .perplexity;
}

// ---------------------------------------------------------------------------

void criterion_table1(Check& check) {
    costmodel::CostInputs few;
    few.n_layers = 12;
    few.d_model = 768;
    few.bottleneck = 256;
    few.backbone_params = 84000000;
    few.avg_tree_depth = 3.0;
    few.node_count = 7;
    few.path_len = 3;
    const auto few_report = costmodel::cost_report(few);
    auto within = [&](long long got, double target, const std::string& what) {
        check.expect(std::abs(static_cast<double>(got) / target - 1.0) <= 0.01,
                     what + ": " + std::to_string(got) + " not within 1% of " +
                         std::to_string(target));
    };
    check.expect(few_report.total == 33030144, "few-domain total must be exactly 33030144");
    within(few_report.total, 33.0e6, "few-domain total");
    within(few_report.active, 14.2e6, "few-domain active (3-node path)");
    check.expect(few_report.multi_size == 768, "few-domain parity size must be 768");
    within(few_report.multi_total, 14.2e6, "few-domain multi total");

    costmodel::CostInputs many = few;
    many.bottleneck = 64;
    many.avg_tree_depth = 8.0;
    many.node_count = 49;
    many.path_len = 8;
    const auto many_report = costmodel::cost_report(many);
    check.expect(many_report.total == 57802752, "many-domain total must be exactly 57802752");
    within(many_report.total, 57.8e6, "many-domain total");
    within(many_report.active, 9.44e6, "many-domain active (8-node path)");
    check.expect(many_report.multi_size == 512, "many-domain parity size must be 512");
    within(many_report.multi_total, 9.44e6, "many-domain multi total");
}

void criterion_flops(Check& check) {
    costmodel::CostInputs in;
    in.n_layers = 12;
    in.d_model = 768;
    in.bottleneck = 64;
    in.backbone_params = 84000000;
    in.avg_tree_depth = 8.0;
    in.n_paths = 1;
    const double one = costmodel::flops_overhead(in).overhead_ratio;
    check.expect_near(one, 0.11, 0.01, "single-path flop overhead vs 11%");
    in.n_paths = 2;
    const double two = costmodel::flops_overhead(in).overhead_ratio;
    check.expect_near(two, 0.22, 0.01, "two-path flop overhead vs 22%");
}

clustering::GaussianComponent random_pd_component(std::size_t p, Rng& rng) {
    clustering::GaussianComponent g;
    g.weight = 1.0;
    g.mean.resize(p);
    for (double& v : g.mean) v = 2.0 * rng.normal();
    linalg::Mat b(p, p);
    for (double& v : b.a) v = rng.normal();
    g.cov = linalg::Mat(p, p);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < p; ++k) acc += b.at(i, k) * b.at(j, k);
            g.cov.at(i, j) = acc;
        }
    for (std::size_t i = 0; i < p; ++i) g.cov.at(i, i) += 0.4;
    return g;
}

void criterion_kl(Check& check) {
    Rng rng(kSeed);
    for (int rep = 0; rep < 25; ++rep) {
        const auto g = random_pd_component(3, rng);
        check.expect_le(std::abs(clustering::kl_gauss(g, g)), 1e-10,
                        "kl of identical gaussians");
    }
    auto g1d = [](double mean, double var) {
        clustering::GaussianComponent g;
        g.weight = 1.0;
        g.mean = {mean};
        g.cov = linalg::Mat(1, 1);
        g.cov.at(0, 0) = var;
        return g;
    };
    check.expect_near(clustering::kl_gauss(g1d(0, 1), g1d(1, 1)), 0.5, 1e-9,
                      "1-d unit-variance shifted-mean closed form");
    const double expect = 0.5 * (0.5 + std::log(2.0) - 1.0);  // = 0.09657...
    check.expect_near(clustering::kl_gauss(g1d(0, 1), g1d(0, 2)), expect, 1e-9,
                      "1-d equal-mean variance-doubling closed form");
    for (int rep = 0; rep < 100; ++rep) {
        const auto a = random_pd_component(3, rng);
        const auto b = random_pd_component(3, rng);
        check.expect(clustering::sym_kl(a, b) == clustering::sym_kl(b, a),
                     "sym_kl must be bitwise symmetric");
    }
    for (int rep = 0; rep < 40; ++rep) {
        const auto a = random_pd_component(3, rng);
        const auto b = random_pd_component(3, rng);
        check.expect_near(clustering::kl_gauss(a, b), oracles::kl_gauss_reference(a, b), 1e-9,
                          "kl vs high-precision direct evaluation");
    }
}

void criterion_gmm(Check& check) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed * 31 + 5);
        const std::size_t n = 50 + rng.uniform_index(40);
        const std::size_t p = 2 + rng.uniform_index(2);
        linalg::Mat x(n, p);
        for (double& v : x.a) v = rng.normal() + (rng.uniform() < 0.5 ? -1.2 : 1.2);
        clustering::GmmConfig cfg;
        cfg.seed = seed;
        cfg.n_init = 2;
        cfg.max_iter = 60;
        const auto gmm = clustering::gmm_fit(x, 2 + static_cast<int>(seed % 2), cfg);
        const auto& trace = gmm.log_likelihood_trace;
        for (std::size_t i = 1; i < trace.size(); ++i)
            check.expect(trace[i] >= trace[i - 1] - 1e-8,
                         "log-likelihood must be monotone (seed " + std::to_string(seed) + ")");
        for (int rep = 0; rep < 5; ++rep) {
            std::vector<double> probe(p);
            for (double& v : probe) v = 2.0 * rng.normal();
            const auto resp = clustering::responsibilities(gmm, probe);
            double total = 0.0;
            for (double v : resp) total += v;
            check.expect_le(std::abs(total - 1.0), 1e-12, "responsibilities must sum to 1");
        }
    }
    // Planted 2-blob recovery at 10-sigma separation.
    Rng rng(kSeed + 3);
    const double sigma = 0.25;
    linalg::Mat x(1600, 2);
    for (std::size_t r = 0; r < 1600; ++r) {
        const double cx = r < 800 ? 0.0 : 10.0 * sigma;
        x.at(r, 0) = cx + sigma * rng.normal();
        x.at(r, 1) = sigma * rng.normal();
    }
    clustering::GmmConfig cfg;
    cfg.seed = kSeed;
    const auto gmm = clustering::gmm_fit(x, 2, cfg);
    for (double cx : {0.0, 10.0 * sigma}) {
        double best = 1e300;
        for (const auto& g : gmm.components)
            best = std::min(best, std::hypot(g.mean[0] - cx, g.mean[1]));
        check.expect_le(best, 0.1 * sigma, "planted blob mean recovery within 0.1 sigma");
    }
}

void criterion_end_to_end(Check& check) {
    Fixture& fx = fixture();
    const auto domains = fx.corpora.domain_names();

    // Backbone reference perplexities.
    std::map<std::string, double> base_ppl;
    for (const auto& d : domains) {
        base_ppl[d] = routing::evaluate_perplexity(fx.backbone, {},
                                                   eval_stream(fx.corpora, d), kSeqLen)
                          .perplexity;
        fx.ppl[{"backbone", -1, d}] = base_ppl[d];
    }

    // (c) Zero-init identity: adapted perplexity equals the backbone's
    // bitwise before any training step.
    fx.hier_store = domtree::attach_adapters(fx.manual_tree, fx.lm_cfg, kBottleneck, kSeed);
    bool zero_ok = true;
    for (const auto& d : domains) {
        const double adapted = path_perplexity(fx, fx.manual_tree, fx.hier_store,
                                               fx.manual_tree.leaf_for_domain(d), d);
        if (adapted != base_ppl[d]) {
            zero_ok = false;
            check.expect(false, "zero-init perplexity must equal the backbone's bitwise on " + d);
        }
    }
    fx.zero_init_ok = zero_ok;

    // Train the hierarchical model and both baselines, 2000 steps each.
    const std::uint64_t backbone_before = fx.backbone.checksum();
    trainer::train_adapters(fx.backbone, fx.manual_tree, fx.hier_store, fx.corpora,
                            adapter_train_config(trainer::Variant::kHierarchical));

    const int parity = costmodel::parity_multi_size(
        kBottleneck, domtree::average_path_length(fx.manual_tree));
    fx.multi_store = domtree::attach_adapters(fx.one_node_tree, fx.lm_cfg, parity, kSeed + 1);
    trainer::train_adapters(fx.backbone, fx.one_node_tree, fx.multi_store, fx.corpora,
                            adapter_train_config(trainer::Variant::kMultiDomain));

    for (const auto& d : domains) {
        auto store = domtree::attach_adapters(fx.one_node_tree, fx.lm_cfg, parity, kSeed + 2);
        trainer::train_adapters(fx.backbone, fx.one_node_tree, store, fx.corpora,
                                adapter_train_config(trainer::Variant::kSingle, d));
        fx.single_stores.emplace(d, std::move(store));
    }

    // (a) Every variant improves on the frozen backbone in-domain.
    for (const auto& d : domains) {
        const int leaf = fx.manual_tree.leaf_for_domain(d);
        const double hier = path_perplexity(fx, fx.manual_tree, fx.hier_store, leaf, d);
        fx.ppl[{"hierarchical", leaf, d}] = hier;
        check.expect(hier < base_ppl[d], "hierarchical must beat the backbone on " + d);

        const double multi = path_perplexity(fx, fx.one_node_tree, fx.multi_store,
                                             fx.one_node_tree.root(), d);
        fx.ppl[{"multi", -1, d}] = multi;
        check.expect(multi < base_ppl[d], "multi-domain must beat the backbone on " + d);

        const double single = path_perplexity(fx, fx.one_node_tree, fx.single_stores.at(d),
                                              fx.one_node_tree.root(), d);
        fx.ppl[{"single", -1, d}] = single;
        check.expect(single < base_ppl[d], "single adapter must beat the backbone on " + d);
    }

    // (b) Path specialization: the own path is the best path per domain.
    for (const auto& d : domains) {
        const int own = fx.manual_tree.leaf_for_domain(d);
        const double own_ppl = fx.ppl.at({"hierarchical", own, d});
        for (const auto& other : domains) {
            if (other == d) continue;
            const int leaf = fx.manual_tree.leaf_for_domain(other);
            const double cross = path_perplexity(fx, fx.manual_tree, fx.hier_store, leaf, d);
            fx.ppl[{"hierarchical", leaf, d}] = cross;
            check.expect(own_ppl < cross, "path to " + d + " must beat the path to " + other +
                                              " when evaluated on " + d);
        }
    }

    // Freeze bookkeeping for criterion 10.
    bool freeze_ok = fx.backbone.checksum() == backbone_before;
    {
        // Off-path adapters stay bit-identical when their domains never occur.
        lm::CorpusSet partial;
        partial.domains["alpha"] = fx.corpora.stream("alpha");
        partial.domains["bravo"] = fx.corpora.stream("bravo");
        auto store = domtree::attach_adapters(fx.manual_tree, fx.lm_cfg, kBottleneck, kSeed + 9);
        const auto before3 = store.node_checksum(3);
        const auto before4 = store.node_checksum(4);
        const auto before6 = store.node_checksum(6);
        auto cfg = adapter_train_config(trainer::Variant::kHierarchical);
        cfg.total_steps = 50;
        trainer::train_adapters(fx.backbone, fx.manual_tree, store, partial, cfg);
        freeze_ok = freeze_ok && store.node_checksum(3) == before3 &&
                    store.node_checksum(4) == before4 && store.node_checksum(6) == before6 &&
                    fx.backbone.checksum() == backbone_before;
    }
    fx.freeze_ok = freeze_ok;
    check.expect(freeze_ok, "backbone and off-path adapters must stay frozen");
}

void criterion_unsupervised_tree(Check& check) {
    Fixture& fx = fixture();
    int successes = 0;
    std::vector<std::string> notes;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto corpora =
            lm::CorpusSet::from_text(synth::planted_pairs(150, kSeed + seed));
        // Embed 60 sequences per domain with the shared frozen backbone.
        clustering::EmbeddingMatrix emb;
        const std::size_t per = 60;
        const auto names = corpora.domain_names();
        emb.rows = linalg::Mat(per * names.size(), static_cast<std::size_t>(fx.lm_cfg.d_model));
        emb.row_domain.resize(emb.rows.rows);
        std::size_t r = 0;
        for (const auto& name : names) {
            Rng rng(Rng::derive(kSeed + seed, 0xa6 + r));
            for (std::size_t i = 0; i < per; ++i, ++r) {
                const auto window = lm::sample_window(corpora.stream(name), kSeqLen, rng, name);
                const auto pooled = fx.backbone.embed_sequence(window);
                std::copy(pooled.begin(), pooled.end(), emb.rows.row(r).begin());
                emb.row_domain[r] = name;
            }
        }
        const auto pca = clustering::pca_fit(emb.rows, 8);
        const auto reduced = clustering::pca_transform(pca, emb.rows);
        clustering::GmmConfig gmm_cfg;
        gmm_cfg.seed = kSeed + seed;
        const auto gmm = clustering::gmm_fit(reduced, 4, gmm_cfg);
        clustering::EmbeddingMatrix red_emb;
        red_emb.rows = reduced;
        red_emb.row_domain = emb.row_domain;
        const auto assign = clustering::assign_and_prune(gmm, red_emb.split_by_domain());
        if (assign.retained.size() != 4) {
            notes.push_back("seed " + std::to_string(seed) + ": " +
                            std::to_string(assign.retained.size()) + " clusters survived");
            continue;
        }
        std::vector<clustering::GaussianComponent> kept;
        for (int c : assign.retained) kept.push_back(gmm.components[static_cast<std::size_t>(c)]);
        const auto steps = clustering::agglomerate(clustering::sym_kl_distances(kept));
        auto tree = domtree::from_linkage(steps, assign.retained);
        tree.map_domains(assign.cluster_of_domain);
        const auto parent = [&](const std::string& d) {
            return *tree.node(tree.leaf_for_domain(d)).parent;
        };
        if (parent("reef_a") == parent("reef_b") && parent("dune_a") == parent("dune_b"))
            ++successes;
        else
            notes.push_back("seed " + std::to_string(seed) + ": pairs not siblings");
    }
    std::string detail;
    for (const auto& n : notes) detail += " [" + n + "]";
    check.expect(successes >= 9, "planted pairs must merge first on >= 9/10 seeds (got " +
                                     std::to_string(successes) + ")" + detail);
}

void criterion_routing(Check& check) {
    // Part 1: exact agreement with a brute-force oracle on random instances.
    Rng rng(kSeed + 11);
    for (int rep = 0; rep < 1000; ++rep) {
        const int k = 2 + static_cast<int>(rng.uniform_index(4));
        clustering::GmmModel gmm;
        gmm.dim = 1;
        for (int j = 0; j < k; ++j) {
            clustering::GaussianComponent g;
            g.weight = 1.0 / k;
            g.mean = {rng.normal() * 3.0};
            g.cov = linalg::Mat(1, 1);
            g.cov.at(0, 0) = 0.5 + rng.uniform();
            gmm.components.push_back(g);
        }
        std::vector<int> retained;
        for (int j = 0; j < k; ++j)
            if (retained.size() < 2 || rng.uniform() < 0.6) retained.push_back(j);
        std::vector<domtree::LinkageStep> steps;
        int live = 0;
        const int kr = static_cast<int>(retained.size());
        for (int i = 0; i + 1 < kr; ++i) {
            steps.push_back({live, i + 1, kr + i, 1.0 + i, i + 2});
            live = kr + i;
        }
        auto tree = domtree::from_linkage(steps, retained);
        const std::size_t n_probe = 4 + rng.uniform_index(8);
        linalg::Mat probes(n_probe, 1);
        for (std::size_t i = 0; i < n_probe; ++i) {
            // Duplicated probes force frequent exact vote ties.
            if (i > 0 && rng.uniform() < 0.4) probes.at(i, 0) = probes.at(i - 1, 0);
            else probes.at(i, 0) = rng.normal() * 4.0;
        }
        const int n_paths = 1 + static_cast<int>(rng.uniform_index(retained.size()));
        const auto sel = routing::select_paths(gmm, tree, probes, n_paths);

        // Oracle: enumerate probes, count retained-argmax votes, sort.
        std::map<int, long long> votes;
        for (int c : retained) votes[c] = 0;
        for (std::size_t i = 0; i < n_probe; ++i) {
            const auto resp = clustering::responsibilities(gmm, probes.row(i));
            int best = retained[0];
            for (int c : retained)
                if (resp[static_cast<std::size_t>(c)] > resp[static_cast<std::size_t>(best)])
                    best = c;
            votes[best] += 1;
        }
        std::vector<std::pair<int, long long>> order(votes.begin(), votes.end());
        std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        bool same = sel.ranked.size() == order.size();
        for (std::size_t i = 0; same && i < order.size(); ++i)
            same = sel.ranked[i].cluster == order[i].first &&
                   sel.ranked[i].votes == order[i].second;
        for (int i = 0; same && i < n_paths; ++i)
            same = sel.selected[static_cast<std::size_t>(i)] ==
                   tree.leaf_for_cluster(order[static_cast<std::size_t>(i)].first);
        check.expect(same, "select_paths must match the oracle on instance " +
                               std::to_string(rep));
        if (!same) break;
    }

    // Part 2: a 70/30 held-out mixture routes to its two source domains.
    Fixture& fx = fixture();
    const auto emb_of = [&](const std::vector<int>& window) {
        return fx.backbone.embed_sequence(window);
    };
    // Cluster the four training domains into a tree.
    clustering::EmbeddingMatrix emb;
    const std::size_t per = 60;
    const auto names = fx.corpora.domain_names();
    emb.rows = linalg::Mat(per * names.size(), static_cast<std::size_t>(fx.lm_cfg.d_model));
    emb.row_domain.resize(emb.rows.rows);
    std::size_t r = 0;
    for (const auto& name : names) {
        Rng rng2(Rng::derive(kSeed, 0xb00 + r));
        for (std::size_t i = 0; i < per; ++i, ++r) {
            const auto window = lm::sample_window(fx.corpora.stream(name), kSeqLen, rng2, name);
            const auto pooled = emb_of(window);
            std::copy(pooled.begin(), pooled.end(), emb.rows.row(r).begin());
            emb.row_domain[r] = name;
        }
    }
    const auto pca = clustering::pca_fit(emb.rows, 8);
    const auto reduced = clustering::pca_transform(pca, emb.rows);
    clustering::GmmConfig gmm_cfg;
    gmm_cfg.seed = kSeed + 21;
    const auto gmm = clustering::gmm_fit(reduced, 4, gmm_cfg);
    clustering::EmbeddingMatrix red_emb;
    red_emb.rows = reduced;
    red_emb.row_domain = emb.row_domain;
    const auto assign = clustering::assign_and_prune(gmm, red_emb.split_by_domain());
    check.expect(assign.retained.size() == 4, "four training domains must keep four clusters");
    if (assign.retained.size() != 4) return;
    std::vector<clustering::GaussianComponent> kept;
    for (int c : assign.retained) kept.push_back(gmm.components[static_cast<std::size_t>(c)]);
    auto tree = domtree::from_linkage(clustering::agglomerate(clustering::sym_kl_distances(kept)),
                                      assign.retained);
    tree.map_domains(assign.cluster_of_domain);

    auto store = domtree::attach_adapters(tree, fx.lm_cfg, kBottleneck, kSeed + 31);
    trainer::train_adapters(fx.backbone, tree, store, fx.corpora,
                            adapter_train_config(trainer::Variant::kHierarchical));

    // Held-out mixture: 70% alpha documents, 30% bravo documents.
    const auto raw = synth::four_distinct_domains(400, kSeed + 77);
    Rng mix_rng(kSeed + 41);
    const std::string probe_text =
        synth::mixed_corpus(raw.at("alpha"), raw.at("bravo"), 0.7, 200, mix_rng);
    const std::string eval_text =
        synth::mixed_corpus(raw.at("alpha"), raw.at("bravo"), 0.7, 300, mix_rng);
    const auto probe_corpus = lm::CorpusSet::from_text({{"mixed", probe_text}});
    const auto eval_corpus = lm::CorpusSet::from_text({{"mixed", eval_text}});

    const auto& probe_stream = probe_corpus.stream("mixed");
    const std::size_t n_probe =
        std::min<std::size_t>(200, probe_stream.size() / static_cast<std::size_t>(kSeqLen));
    linalg::Mat raw_probes(n_probe, static_cast<std::size_t>(fx.lm_cfg.d_model));
    for (std::size_t i = 0; i < n_probe; ++i) {
        std::span<const int> ids(probe_stream.data() + i * kSeqLen,
                                 static_cast<std::size_t>(kSeqLen));
        const auto pooled = fx.backbone.embed_sequence(ids);
        std::copy(pooled.begin(), pooled.end(), raw_probes.row(i).begin());
    }
    const auto probes = clustering::pca_transform(pca, raw_probes);
    const auto sel = routing::select_paths(gmm, tree, probes, 2);
    const int leaf_alpha = tree.leaf_for_domain("alpha");
    const int leaf_bravo = tree.leaf_for_domain("bravo");
    check.expect(sel.selected.size() == 2 && sel.selected[0] == leaf_alpha &&
                     sel.selected[1] == leaf_bravo,
                 "70/30 mixture must select the two source-domain leaves in order");

    const auto& stream = eval_corpus.stream("mixed");
    std::span<const int> eval_span(stream.data(),
                                   std::min<std::size_t>(stream.size(), kEvalTokens));
    std::vector<int> one{leaf_alpha};
    std::vector<int> two{leaf_alpha, leaf_bravo};
    const double one_ppl =
        routing::evaluate_perplexity(fx.backbone, routing::multi_path_hook(tree, store, one),
                                     eval_span, kSeqLen)
            .perplexity;
    const double two_ppl =
        routing::evaluate_perplexity(fx.backbone, routing::multi_path_hook(tree, store, two),
                                     eval_span, kSeqLen)
            .perplexity;
    check.expect_le(two_ppl, one_ppl * 1.02,
                    "two-path perplexity must be within 2% of the single path");
}

void criterion_gradients(Check& check) {
    lm::LmConfig cfg;
    cfg.n_layers = 2;
    cfg.d_model = 12;
    cfg.n_heads = 2;
    cfg.context_len = 16;
    cfg.vocab_size = 40;
    lm::LmModel model = lm::LmModel::init(cfg, kSeed);
    model.set_requires_grad(false);
    auto tree = domtree::build_manual_tree(domtree::parse_group_spec("((a,b),(c,d))"));
    auto store = domtree::attach_adapters(tree, cfg, 3, kSeed + 1);
    Rng rng(kSeed + 2);
    for (auto& [id, node] : store.nodes)
        for (auto& l : node.layers)
            for (double& v : l.w_up.data()) v = 0.2 * rng.normal();

    std::vector<int> ids(12);
    for (int& id : ids) id = static_cast<int>(rng.uniform_index(40));
    const auto path = domtree::path_to_leaf(tree, tree.leaf_for_domain("a"));
    std::vector<const adapters::AdapterParams*> nodes;
    for (int id : path) nodes.push_back(&store.node(id));
    auto loss = [&]() {
        lm::AdapterHook hook = [&](const numcore::Tensor& h, int layer) {
            return adapters::node_average(h, nodes, layer, store.shared);
        };
        return lm::window_loss(model, ids, hook);
    };

    // 50 random coordinates across the active path and the shared norm.
    std::vector<numcore::Tensor> pool;
    for (int id : path) {
        const auto& node = store.node(id);
        for (const auto& l : node.layers) {
            pool.push_back(l.w_down);
            pool.push_back(l.b_down);
            pool.push_back(l.w_up);
            pool.push_back(l.b_up);
        }
    }
    for (const auto& l : store.shared.layers) {
        pool.push_back(l.gain);
        pool.push_back(l.bias);
    }
    std::vector<numcore::ParamCoord> coords;
    for (int i = 0; i < 50; ++i) {
        numcore::Tensor t = pool[rng.uniform_index(pool.size())];
        coords.push_back({t, rng.uniform_index(t.size())});
    }
    const double err = numcore::finite_diff_check_coords(loss, coords, 1e-5);
    check.expect_le(err, 1e-4, "adapter-path gradients vs finite differences");
}

void criterion_counters(Check& check) {
    lm::LmConfig cfg;
    cfg.n_layers = 1;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.context_len = 32;
    cfg.vocab_size = 260;
    lm::LmModel model = lm::LmModel::init(cfg, kSeed);
    auto corpora = lm::CorpusSet::from_text(synth::four_distinct_domains(30, kSeed + 5));
    auto tree = domtree::build_manual_tree(
        domtree::parse_group_spec("((alpha,bravo),(charlie,delta))"));
    auto store = domtree::attach_adapters(tree, cfg, 4, kSeed);
    trainer::TrainConfig tc;
    tc.total_steps = 80;
    tc.seq_len = 16;
    tc.batch_size = 1;
    tc.accum_steps = 1;
    tc.sampling = trainer::Sampling::kRoundRobin;
    tc.seed = kSeed;
    const auto result = trainer::train_adapters(model, tree, store, corpora, tc);
    check.expect(result.counters.of(tree.root()) == 80, "root counter must equal total steps");
    long long leaf_sum = 0;
    for (int leaf : tree.leaf_ids()) {
        leaf_sum += result.counters.of(leaf);
        check.expect(result.counters.of(leaf) == 20, "each leaf must see total/4 updates");
        check.expect(result.counters.of(tree.root()) == 4 * result.counters.of(leaf),
                     "root/leaf update ratio must be exactly 4");
    }
    check.expect(leaf_sum == 80, "leaf counters must sum to the total step count");
    for (int id : tree.node_ids()) {
        const auto& n = tree.node(id);
        if (n.is_leaf()) continue;
        long long children = 0;
        for (int c : n.children) children += result.counters.of(c);
        check.expect(result.counters.of(id) == children,
                     "internal counters must equal the sum of their children");
    }
}

void criterion_freeze(Check& check) {
    Fixture& fx = fixture();
    check.expect(fx.freeze_ok, "freeze guarantees collected during criterion 5 must hold");
    check.expect(fx.zero_init_ok, "zero-init identity collected during criterion 5 must hold");
}

struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    std::function<void(Check&)> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "parameter accounting table", 1.0, criterion_table1},
        {2, "flop overhead ratios", 1.0, criterion_flops},
        {3, "gaussian divergence suite", 5.0, criterion_kl},
        {4, "mixture fitting (EM)", 30.0, criterion_gmm},
        {5, "end-to-end domain specialization", 600.0, criterion_end_to_end},
        {6, "unsupervised tree recovery", 300.0, criterion_unsupervised_tree},
        {7, "routing selection and two-path evaluation", 300.0, criterion_routing},
        {8, "gradient integrity of the adapter path", 60.0, criterion_gradients},
        {9, "update accounting", 60.0, criterion_counters},
        {10, "freeze guarantees", 600.0, criterion_freeze},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        Check check;
        const auto start = std::chrono::steady_clock::now();
        try {
            c.run(check);
        } catch (const std::exception& e) {
            check.failures.push_back(std::string("exception: ") + e.what());
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (elapsed > c.budget_seconds)
            check.failures.push_back("runtime " + std::to_string(elapsed) +
                                     "s exceeded budget " + std::to_string(c.budget_seconds) +
                                     "s");
        if (check.failures.empty()) {
            std::printf("[PASS] criterion %2d: %s (%.2fs)\n", c.id, c.name, elapsed);
        } else {
            ++failures;
            std::printf("[FAIL] criterion %2d: %s (%.2fs)\n", c.id, c.name, elapsed);
            for (const auto& f : check.failures) std::printf("       - %s\n", f.c_str());
        }
    }
    return failures;
}
