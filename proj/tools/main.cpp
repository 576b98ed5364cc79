#include <exception>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hieradapt/commands.hpp"
#include "hieradapt/errors.hpp"

namespace {

using hieradapt::cli::RunConfig;

int run(int argc, char** argv) {
    CLI::App app{"Hierarchical domain adapters for a small causal language model"};
    app.name("hieradapt");
    app.require_subcommand(1);

    std::string config_path;
    std::string variant = "hierarchical";
    std::string domain;
    std::string corpus_path;
    std::string paths_arg;
    std::string probe_path;

    auto add_config = [&](CLI::App* cmd) {
        cmd->add_option("-c,--config", config_path, "Run configuration file (TOML-style)")
            ->required();
    };

    auto* pretrain = app.add_subcommand("pretrain", "Train the backbone on all domains");
    add_config(pretrain);

    auto* embed = app.add_subcommand("embed", "Extract sequence embeddings per domain");
    add_config(embed);

    auto* build_tree =
        app.add_subcommand("build-tree", "Build the domain tree (manual or clustered)");
    add_config(build_tree);

    auto* train = app.add_subcommand("train", "Train adapters on the frozen backbone");
    add_config(train);
    train->add_option("--variant", variant,
                      "hierarchical, multi_domain or single (overrides the config)");
    std::string single_domain;
    train->add_option("--single-domain", single_domain,
                      "Domain for the single-adapter variant");

    auto* eval = app.add_subcommand("eval", "Evaluate perplexity per domain");
    add_config(eval);
    eval->add_option("--variant", variant,
                     "backbone, hierarchical, multi or single:<domain>");
    eval->add_option("--domain", domain, "Domain label for routed evaluation");
    eval->add_option("--corpus", corpus_path, "Corpus file for routed evaluation");
    eval->add_option("--paths", paths_arg,
                     "Semicolon-separated leaf ids for routed evaluation");
    std::string combine = "paths";
    eval->add_option("--combine", combine,
                     "Multi-path combination: paths (mean of path means) or union");

    auto* route = app.add_subcommand("route", "Select tree paths for a held-out domain");
    add_config(route);
    route->add_option("--domain", domain, "Held-out domain label")->required();
    route->add_option("--probes", probe_path, "Probe corpus (one document per line)")
        ->required();

    auto* cost = app.add_subcommand("cost", "Parameter and flop accounting");
    hieradapt::cli::CostArgs cost_args;
    std::string cost_csv;
    cost->add_option("--layers", cost_args.inputs.n_layers, "Transformer layers")->required();
    cost->add_option("--d-model", cost_args.inputs.d_model, "Model width")->required();
    cost->add_option("--adapter-size", cost_args.inputs.bottleneck, "Adapter bottleneck")
        ->required();
    cost->add_option("--backbone-params", cost_args.inputs.backbone_params,
                     "Non-embedding backbone parameters")
        ->required();
    cost->add_option("--nodes", cost_args.inputs.node_count, "Tree node count")->required();
    cost->add_option("--path-len", cost_args.inputs.path_len, "Active path length")->required();
    cost->add_option("--depth", cost_args.inputs.avg_tree_depth,
                     "Average tree depth (defaults to --path-len)");
    cost->add_option("--paths", cost_args.inputs.n_paths, "Concurrent inference paths");
    cost->add_option("--csv", cost_csv, "Also write the report as CSV");

    CLI11_PARSE(app, argc, argv);

    if (pretrain->parsed()) {
        hieradapt::cli::cmd_pretrain(RunConfig::load(config_path));
    } else if (embed->parsed()) {
        hieradapt::cli::cmd_embed(RunConfig::load(config_path));
    } else if (build_tree->parsed()) {
        hieradapt::cli::cmd_build_tree(RunConfig::load(config_path));
    } else if (train->parsed()) {
        RunConfig cfg = RunConfig::load(config_path);
        if (train->count("--variant")) {
            if (variant == "hierarchical") cfg.train.variant = hieradapt::trainer::Variant::kHierarchical;
            else if (variant == "multi_domain") cfg.train.variant = hieradapt::trainer::Variant::kMultiDomain;
            else if (variant == "single") cfg.train.variant = hieradapt::trainer::Variant::kSingle;
            else throw hieradapt::ConfigError("unknown train variant: " + variant);
        }
        if (!single_domain.empty()) cfg.train.single_domain = single_domain;
        hieradapt::cli::cmd_train(cfg);
    } else if (eval->parsed()) {
        RunConfig cfg = RunConfig::load(config_path);
        if (!paths_arg.empty()) {
            if (domain.empty() || corpus_path.empty())
                throw hieradapt::ConfigError(
                    "routed eval needs --domain, --corpus and --paths");
            std::vector<int> leaves;
            std::string token;
            std::istringstream in(paths_arg);
            while (std::getline(in, token, ';'))
                if (!token.empty()) leaves.push_back(std::stoi(token));
            hieradapt::routing::PathCombine pc;
            if (combine == "paths") pc = hieradapt::routing::PathCombine::kMeanOfPathMeans;
            else if (combine == "union") pc = hieradapt::routing::PathCombine::kUnionOfNodes;
            else throw hieradapt::ConfigError("unknown --combine mode: " + combine);
            hieradapt::cli::cmd_eval_paths(cfg, domain, corpus_path, leaves, pc);
        } else {
            hieradapt::cli::cmd_eval(cfg, variant);
        }
    } else if (route->parsed()) {
        hieradapt::cli::cmd_route(RunConfig::load(config_path), domain, probe_path);
    } else if (cost->parsed()) {
        if (!cost->count("--depth"))
            cost_args.inputs.avg_tree_depth = static_cast<double>(cost_args.inputs.path_len);
        cost_args.csv_out = cost_csv;
        hieradapt::cli::cmd_cost(cost_args);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const hieradapt::ConfigError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
    } catch (const hieradapt::DependencyError& e) {
        std::cerr << "error: dependency: " << e.what() << "\n";
    } catch (const hieradapt::DataError& e) {
        std::cerr << "error: data: " << e.what() << "\n";
    } catch (const hieradapt::ValidationError& e) {
        std::cerr << "error: validation: " << e.what() << "\n";
    } catch (const hieradapt::DimensionError& e) {
        std::cerr << "error: validation: " << e.what() << "\n";
    } catch (const hieradapt::NumericError& e) {
        std::cerr << "error: numeric: " << e.what() << "\n";
    } catch (const hieradapt::MatrixError& e) {
        std::cerr << "error: numeric: " << e.what() << "\n";
    } catch (const hieradapt::ConvergenceError& e) {
        std::cerr << "error: numeric: " << e.what() << "\n";
    } catch (const hieradapt::IoError& e) {
        std::cerr << "error: io: " << e.what() << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
    }
    return 1;
}
