#include "hieradapt/commands.hpp"

#include <iostream>
#include <sstream>

#include <json.hpp>

#include "hieradapt/errors.hpp"
#include "hieradapt/serial.hpp"
#include "hieradapt/trainer.hpp"

namespace hieradapt::cli {

namespace fs = std::filesystem;

namespace {

void require(const fs::path& artifact, const std::string& producing_command) {
    if (!fs::exists(artifact))
        throw DependencyError("missing artifact " + artifact.string() + " (run '" +
                              producing_command + "' first)");
}

void write_manifest(const Artifacts& art, const std::string& command, std::uint64_t seed,
                    const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs) {
    nlohmann::json doc;
    doc["command"] = command;
    doc["version"] = 1;
    doc["seed"] = seed;
    doc["inputs"] = nlohmann::json::object();
    for (const auto& p : inputs) {
        std::ostringstream hex;
        hex << std::hex << io::hash_file(p);
        doc["inputs"][p.string()] = hex.str();
    }
    doc["outputs"] = nlohmann::json::array();
    for (const auto& p : outputs) doc["outputs"].push_back(p.string());
    io::atomic_write_file(art.manifest(command), doc.dump(2) + "\n");
}

std::vector<fs::path> corpus_paths(const RunConfig& cfg) {
    std::vector<fs::path> out;
    for (const auto& [_, p] : cfg.corpora) out.push_back(p);
    return out;
}

lm::CorpusSet load_corpora(const RunConfig& cfg) { return lm::CorpusSet::load(cfg.corpora); }

domtree::DomainTree one_node_tree(const lm::CorpusSet& corpora) {
    auto tree = domtree::build_manual_tree(domtree::GroupSpec::leaf("shared"));
    for (const auto& name : corpora.domain_names()) tree.bind_domain(name, tree.root());
    return tree;
}

int effective_eval_seq_len(const RunConfig& cfg) {
    return cfg.eval_seq_len > 0 ? cfg.eval_seq_len : cfg.train.seq_len;
}

std::span<const int> capped_stream(const RunConfig& cfg, const std::vector<int>& stream) {
    if (cfg.eval_max_tokens > 0 &&
        stream.size() > static_cast<std::size_t>(cfg.eval_max_tokens))
        return {stream.data(), static_cast<std::size_t>(cfg.eval_max_tokens)};
    return stream;
}

int baseline_bottleneck(const RunConfig& cfg, const Artifacts& art) {
    if (cfg.baseline_bottleneck > 0) return cfg.baseline_bottleneck;
    // Flop parity with the hierarchical tree when one exists.
    if (fs::exists(art.tree(""))) {
        const auto tree = domtree::load_tree(art.tree(""));
        return costmodel::parity_multi_size(cfg.bottleneck,
                                            domtree::average_path_length(tree));
    }
    return cfg.bottleneck;
}

// Embeds n windows of the stream, sampled deterministically from the seed.
clustering::EmbeddingMatrix embed_domains(const lm::LmModel& model,
                                          const lm::CorpusSet& corpora, int per_domain,
                                          int seq_len, std::uint64_t seed) {
    const auto names = corpora.domain_names();
    const std::size_t m = static_cast<std::size_t>(model.config().d_model);
    clustering::EmbeddingMatrix emb;
    emb.rows = linalg::Mat(names.size() * static_cast<std::size_t>(per_domain), m);
    emb.row_domain.resize(emb.rows.rows);
    std::size_t r = 0;
    std::uint64_t salt = 0;
    for (const auto& name : names) {
        Rng rng(Rng::derive(seed, 0xe4b0 + salt++));
        const auto& stream = corpora.stream(name);
        std::vector<std::vector<int>> windows;
        windows.reserve(static_cast<std::size_t>(per_domain));
        for (int i = 0; i < per_domain; ++i)
            windows.push_back(lm::sample_window(stream, seq_len, rng, name));
        const std::size_t base = r;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (per_domain > 4)
#endif
        for (long long i = 0; i < static_cast<long long>(windows.size()); ++i) {
            const auto pooled = model.embed_sequence(windows[static_cast<std::size_t>(i)]);
            std::copy(pooled.begin(), pooled.end(),
                      emb.rows.row(base + static_cast<std::size_t>(i)).begin());
        }
        for (int i = 0; i < per_domain; ++i) emb.row_domain[r++] = name;
    }
    return emb;
}

}  // namespace

fs::path Artifacts::tree(const std::string& tag) const {
    return dir / (tag.empty() ? "tree.json" : "tree_" + tag + ".json");
}
fs::path Artifacts::adapters(const std::string& tag) const {
    return dir / (tag.empty() ? "adapters.bin" : "adapters_" + tag + ".bin");
}
fs::path Artifacts::loss_trace(const std::string& tag) const {
    return dir / (tag.empty() ? "loss_trace.csv" : "loss_trace_" + tag + ".csv");
}
fs::path Artifacts::counters(const std::string& tag) const {
    return dir / (tag.empty() ? "counters.json" : "counters_" + tag + ".json");
}
fs::path Artifacts::perplexity(const std::string& tag) const {
    return dir / ("perplexity_" + tag + ".csv");
}
fs::path Artifacts::route(const std::string& domain) const {
    return dir / ("route_" + domain + ".json");
}
fs::path Artifacts::manifest(const std::string& command) const {
    return dir / ("manifest_" + command + ".json");
}

std::string variant_tag(const trainer::TrainConfig& train) {
    switch (train.variant) {
        case trainer::Variant::kHierarchical: return "";
        case trainer::Variant::kMultiDomain: return "multi";
        case trainer::Variant::kSingle: return "single_" + train.single_domain;
    }
    return "";
}

void cmd_pretrain(const RunConfig& cfg) {
    Artifacts art{cfg.outdir};
    const auto corpora = load_corpora(cfg);
    lm::LmCheckpoint ckpt = lm::pretrain(corpora, cfg.lm, cfg.pretrain);
    lm::save_lm_checkpoint(art.backbone(), ckpt);
    write_manifest(art, "pretrain", cfg.seed, corpus_paths(cfg), {art.backbone()});
    std::cout << "pretrained " << cfg.pretrain.total_steps << " steps -> "
              << art.backbone().string() << "\n";
}

void cmd_embed(const RunConfig& cfg) {
    Artifacts art{cfg.outdir};
    require(art.backbone(), "pretrain");
    const auto corpora = load_corpora(cfg);
    const auto ckpt = lm::load_lm_checkpoint(art.backbone());
    const auto emb = embed_domains(ckpt.model, corpora, cfg.clustering.sequences_per_domain,
                                   cfg.clustering.embed_seq_len, cfg.seed);
    clustering::save_embeddings(art.embeddings(), emb);
    auto inputs = corpus_paths(cfg);
    inputs.push_back(art.backbone());
    write_manifest(art, "embed", cfg.seed, inputs, {art.embeddings()});
    std::cout << "embedded " << emb.rows.rows << " sequences -> " << art.embeddings().string()
              << "\n";
}

void cmd_build_tree(const RunConfig& cfg) {
    Artifacts art{cfg.outdir};
    if (!cfg.manual_tree.empty()) {
        auto tree = domtree::build_manual_tree(domtree::parse_group_spec(cfg.manual_tree));
        for (const auto& [name, _] : cfg.corpora) tree.leaf_for_domain(name);
        domtree::save_tree(art.tree(""), tree);
        write_manifest(art, "build-tree", cfg.seed, {}, {art.tree("")});
        std::cout << "manual tree with " << tree.node_count() << " nodes -> "
                  << art.tree("").string() << "\n";
        return;
    }
    require(art.embeddings(), "embed");
    const auto emb = clustering::load_embeddings(art.embeddings());
    const auto pca = clustering::pca_fit(emb.rows, static_cast<std::size_t>(cfg.clustering.pca_dims));
    clustering::save_pca(art.pca(), pca);
    const auto reduced = clustering::pca_transform(pca, emb.rows);

    clustering::GmmConfig gmm_cfg;
    gmm_cfg.max_iter = cfg.clustering.max_iter;
    gmm_cfg.tol = cfg.clustering.tol;
    gmm_cfg.reg = cfg.clustering.reg;
    gmm_cfg.seed = Rng::derive(cfg.seed, 0x6d6d);
    gmm_cfg.n_init = cfg.clustering.n_init;
    const auto gmm = clustering::gmm_fit(reduced, cfg.clustering.components, gmm_cfg);
    clustering::save_gmm(art.gmm(), gmm);

    clustering::EmbeddingMatrix reduced_emb;
    reduced_emb.rows = reduced;
    reduced_emb.row_domain = emb.row_domain;
    const auto assign = clustering::assign_and_prune(gmm, reduced_emb.split_by_domain());
    io::atomic_write_file(art.confusion(), clustering::confusion_to_csv(assign));

    std::vector<clustering::GaussianComponent> retained;
    for (int c : assign.retained)
        retained.push_back(gmm.components[static_cast<std::size_t>(c)]);
    const auto dist = clustering::sym_kl_distances(retained);
    std::vector<domtree::LinkageStep> steps;
    if (retained.size() >= 2) steps = clustering::agglomerate(dist);
    io::atomic_write_file(art.linkage(), clustering::linkage_to_json(steps));

    auto tree = domtree::from_linkage(steps, assign.retained);
    tree.map_domains(assign.cluster_of_domain);
    domtree::save_tree(art.tree(""), tree);

    write_manifest(art, "build-tree", cfg.seed, {art.embeddings()},
                   {art.pca(), art.gmm(), art.confusion(), art.linkage(), art.tree("")});
    std::cout << "clustered tree: " << tree.node_count() << " nodes over "
              << assign.retained.size() << " retained clusters -> " << art.tree("").string()
              << "\n";
}

void cmd_train(const RunConfig& cfg) {
    Artifacts art{cfg.outdir};
    require(art.backbone(), "pretrain");
    const auto corpora = load_corpora(cfg);
    const auto ckpt = lm::load_lm_checkpoint(art.backbone());
    const std::string tag = variant_tag(cfg.train);

    domtree::DomainTree tree;
    int bottleneck = cfg.bottleneck;
    if (cfg.train.variant == trainer::Variant::kHierarchical) {
        require(art.tree(""), "build-tree");
        tree = domtree::load_tree(art.tree(""));
    } else {
        bottleneck = baseline_bottleneck(cfg, art);
        tree = one_node_tree(corpora);
        domtree::save_tree(art.tree(tag), tree);
    }

    auto store = domtree::attach_adapters(tree, ckpt.model.config(), bottleneck,
                                          Rng::derive(cfg.seed, 0xada0));
    const auto result = trainer::train_adapters(ckpt.model, tree, store, corpora, cfg.train);
    adapters::save_adapter_store(art.adapters(tag), store);
    io::atomic_write_file(art.loss_trace(tag), result.trace_csv());
    io::atomic_write_file(art.counters(tag), result.counters.to_json());

    auto inputs = corpus_paths(cfg);
    inputs.push_back(art.backbone());
    inputs.push_back(art.tree(cfg.train.variant == trainer::Variant::kHierarchical ? "" : tag));
    write_manifest(art, "train" + (tag.empty() ? "" : "-" + tag), cfg.seed, inputs,
                   {art.adapters(tag), art.loss_trace(tag), art.counters(tag)});
    std::cout << "trained " << (tag.empty() ? "hierarchical" : tag) << " adapters (d="
              << bottleneck << ") for " << cfg.train.total_steps << " steps -> "
              << art.adapters(tag).string() << "\n";
}

void cmd_eval(const RunConfig& cfg, const std::string& variant) {
    Artifacts art{cfg.outdir};
    require(art.backbone(), "pretrain");
    const auto corpora = load_corpora(cfg);
    const auto ckpt = lm::load_lm_checkpoint(art.backbone());
    const int seq_len = effective_eval_seq_len(cfg);

    std::string tag;
    std::string label = variant;
    if (variant.rfind("single:", 0) == 0) {
        tag = "single_" + variant.substr(7);
        label = tag;
    } else if (variant == "multi") {
        tag = "multi";
    } else if (variant == "hierarchical") {
        tag = "";
    } else if (variant != "backbone") {
        throw ConfigError("unknown eval variant: " + variant);
    }

    std::vector<routing::PerplexityRow> rows;
    if (variant == "backbone") {
        for (const auto& name : corpora.domain_names()) {
            const auto r = routing::evaluate_perplexity(
                ckpt.model, {}, capped_stream(cfg, corpora.stream(name)), seq_len);
            rows.push_back({name, "backbone", 0, r.perplexity, r.tokens});
        }
    } else {
        require(art.adapters(tag), tag.empty() ? "train" : "train (variant " + label + ")");
        const auto tree = domtree::load_tree(art.tree(tag.empty() ? "" : tag));
        const auto store = adapters::load_adapter_store(art.adapters(tag));
        const auto eval_domains = variant.rfind("single:", 0) == 0
                                      ? std::vector<std::string>{variant.substr(7)}
                                      : corpora.domain_names();
        for (const auto& name : eval_domains) {
            std::vector<int> leaves{tree.leaf_for_domain(name)};
            const auto hook = routing::multi_path_hook(tree, store, leaves);
            const auto r = routing::evaluate_perplexity(
                ckpt.model, hook, capped_stream(cfg, corpora.stream(name)), seq_len);
            rows.push_back({name, label, 1, r.perplexity, r.tokens});
        }
    }
    const std::string tagname = variant == "hierarchical" ? "hierarchical" : label;
    const auto out = art.perplexity(tagname);
    io::atomic_write_file(out, routing::perplexity_csv(rows));
    write_manifest(art, "eval-" + tagname, cfg.seed, {art.backbone()}, {out});
    std::cout << routing::perplexity_csv(rows);
}

void cmd_eval_paths(const RunConfig& cfg, const std::string& domain,
                    const std::filesystem::path& corpus, const std::vector<int>& leaves,
                    routing::PathCombine combine) {
    Artifacts art{cfg.outdir};
    require(art.backbone(), "pretrain");
    require(art.tree(""), "build-tree");
    require(art.adapters(""), "train");
    const auto ckpt = lm::load_lm_checkpoint(art.backbone());
    const auto tree = domtree::load_tree(art.tree(""));
    const auto store = adapters::load_adapter_store(art.adapters(""));
    const auto corpora = lm::CorpusSet::load({{domain, corpus}});
    const auto hook = routing::multi_path_hook(tree, store, leaves, combine);
    const auto r = routing::evaluate_perplexity(
        ckpt.model, hook, capped_stream(cfg, corpora.stream(domain)),
        effective_eval_seq_len(cfg));
    std::vector<routing::PerplexityRow> rows{
        {domain, "hierarchical", static_cast<int>(leaves.size()), r.perplexity, r.tokens}};
    const auto out = art.perplexity("routed_" + domain);
    io::atomic_write_file(out, routing::perplexity_csv(rows));
    write_manifest(art, "eval-routed-" + domain, cfg.seed,
                   {art.backbone(), art.tree(""), art.adapters(""), corpus}, {out});
    std::cout << routing::perplexity_csv(rows);
}

void cmd_route(const RunConfig& cfg, const std::string& domain,
               const std::filesystem::path& probe_file) {
    Artifacts art{cfg.outdir};
    require(art.backbone(), "pretrain");
    require(art.pca(), "build-tree");
    require(art.gmm(), "build-tree");
    require(art.tree(""), "build-tree");
    const auto ckpt = lm::load_lm_checkpoint(art.backbone());
    const auto pca = clustering::load_pca(art.pca());
    const auto gmm = clustering::load_gmm(art.gmm());
    const auto tree = domtree::load_tree(art.tree(""));
    const auto corpora = lm::CorpusSet::load({{domain, probe_file}});
    const auto& stream = corpora.stream(domain);

    // The first n_probe consecutive windows of the probe corpus.
    const int seq_len = cfg.clustering.embed_seq_len;
    const std::size_t max_windows = stream.size() / static_cast<std::size_t>(seq_len);
    const std::size_t n = std::min<std::size_t>(max_windows,
                                                static_cast<std::size_t>(cfg.routing.n_probe));
    if (n == 0) throw DataError("probe corpus yields no full sequence");
    const std::size_t m = static_cast<std::size_t>(ckpt.model.config().d_model);
    linalg::Mat raw(n, m);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (n > 4)
#endif
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        std::span<const int> ids(stream.data() + static_cast<std::size_t>(i) * seq_len,
                                 static_cast<std::size_t>(seq_len));
        const auto pooled = ckpt.model.embed_sequence(ids);
        std::copy(pooled.begin(), pooled.end(), raw.row(static_cast<std::size_t>(i)).begin());
    }
    const auto probes = clustering::pca_transform(pca, raw);
    const auto sel = routing::select_paths(gmm, tree, probes, cfg.routing.n_paths);
    io::atomic_write_file(art.route(domain), routing::route_report_json(domain, sel));
    write_manifest(art, "route-" + domain, cfg.seed,
                   {art.backbone(), art.pca(), art.gmm(), art.tree(""), probe_file},
                   {art.route(domain)});
    std::cout << routing::route_report_json(domain, sel);
}

void cmd_cost(const CostArgs& args) {
    const auto report = costmodel::cost_report(args.inputs);
    std::cout << costmodel::cost_report_text(report);
    if (!args.csv_out.empty()) {
        io::atomic_write_file(args.csv_out, costmodel::cost_report_csv(report));
        std::cout << "csv -> " << args.csv_out.string() << "\n";
    }
}

}  // namespace hieradapt::cli
