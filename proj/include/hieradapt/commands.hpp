#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hieradapt/costmodel.hpp"
#include "hieradapt/runconfig.hpp"

namespace hieradapt::cli {

// Artifact names inside the run's output directory.
struct Artifacts {
    std::filesystem::path dir;

    std::filesystem::path backbone() const { return dir / "backbone.ckpt"; }
    std::filesystem::path embeddings() const { return dir / "embeddings.bin"; }
    std::filesystem::path pca() const { return dir / "pca.bin"; }
    std::filesystem::path gmm() const { return dir / "gmm.bin"; }
    std::filesystem::path tree(const std::string& tag) const;
    std::filesystem::path adapters(const std::string& tag) const;
    std::filesystem::path loss_trace(const std::string& tag) const;
    std::filesystem::path counters(const std::string& tag) const;
    std::filesystem::path linkage() const { return dir / "linkage.json"; }
    std::filesystem::path confusion() const { return dir / "confusion.csv"; }
    std::filesystem::path perplexity(const std::string& tag) const;
    std::filesystem::path route(const std::string& domain) const;
    std::filesystem::path manifest(const std::string& command) const;
};

// Variant tag: "" for hierarchical, "multi", or "single_<domain>".
std::string variant_tag(const trainer::TrainConfig& train);

void cmd_pretrain(const RunConfig& cfg);
void cmd_embed(const RunConfig& cfg);
void cmd_build_tree(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg);

// variant: "backbone", "hierarchical", "multi" or "single:<domain>".
void cmd_eval(const RunConfig& cfg, const std::string& variant);
// Routed evaluation of an external corpus through explicit leaf paths.
void cmd_eval_paths(const RunConfig& cfg, const std::string& domain,
                    const std::filesystem::path& corpus, const std::vector<int>& leaves,
                    routing::PathCombine combine = routing::PathCombine::kMeanOfPathMeans);

void cmd_route(const RunConfig& cfg, const std::string& domain,
               const std::filesystem::path& probe_file);

struct CostArgs {
    costmodel::CostInputs inputs;
    std::filesystem::path csv_out;  // optional
};

void cmd_cost(const CostArgs& args);

}  // namespace hieradapt::cli
