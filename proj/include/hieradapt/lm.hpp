#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hieradapt/corpus.hpp"
#include "hieradapt/tensor.hpp"
#include "hieradapt/trainer_config.hpp"

namespace hieradapt::lm {

struct LmConfig {
    int n_layers = 2;
    int d_model = 64;
    int n_heads = 2;
    int context_len = 128;
    int vocab_size = 260;

    void validate() const;
    bool operator==(const LmConfig&) const = default;
};

// Per-layer transform applied to the layer output h_i before it feeds layer
// i+1 (and, after the last layer, the final norm). A default-constructed
// hook leaves the backbone untouched.
using AdapterHook = std::function<numcore::Tensor(const numcore::Tensor& h, int layer)>;

struct LayerParams {
    numcore::Tensor ln1_gain, ln1_bias;
    numcore::Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    numcore::Tensor ln2_gain, ln2_bias;
    numcore::Tensor w_mlp_in, b_mlp_in, w_mlp_out, b_mlp_out;
};

// Pre-norm causal transformer with a tied embedding head. The token
// embedding doubles as the output projection.
class LmModel {
public:
    LmModel() = default;
    static LmModel init(const LmConfig& config, std::uint64_t seed);

    const LmConfig& config() const { return cfg_; }
    bool defined() const { return wte.defined(); }

    std::vector<std::pair<std::string, numcore::Tensor>> named_parameters() const;
    void set_requires_grad(bool v);
    void zero_grads();
    std::uint64_t checksum() const;

    // Causal logits [t, V]; hook(h, layer) replaces each layer's output.
    numcore::Tensor forward_logits(std::span<const int> ids,
                                   const AdapterHook& hook = {}) const;
    // Output of the final transformer layer (before the final norm).
    numcore::Tensor forward_hidden(std::span<const int> ids,
                                   const AdapterHook& hook = {}) const;
    numcore::Tensor logits_from_hidden(const numcore::Tensor& h) const;
    numcore::Tensor block_forward(const numcore::Tensor& x, int layer) const;
    numcore::Tensor embed_tokens(std::span<const int> ids) const;

    // Mean over positions of the final layer's hidden states, frozen
    // backbone only. The pooling feeds domain clustering.
    std::vector<double> embed_sequence(std::span<const int> ids) const;

    numcore::Tensor wte;  // token embedding, also the output head
    numcore::Tensor wpe;  // learned position embedding
    std::vector<LayerParams> layers;
    numcore::Tensor lnf_gain, lnf_bias;

private:
    LmConfig cfg_;
};

// Mean next-token cross-entropy of one window: rows 0..n-2 of the logits
// predict ids 1..n-1.
numcore::Tensor window_loss(const LmModel& model, std::span<const int> ids,
                            const AdapterHook& hook = {});

struct LmCheckpoint {
    LmModel model;
    std::uint64_t step = 0;
};

void save_lm_checkpoint(const std::filesystem::path& path, const LmCheckpoint& ckpt);
LmCheckpoint load_lm_checkpoint(const std::filesystem::path& path);

// Next-token training of the backbone on the union of all domains.
// Returns the trained model plus its step counter; with total_steps == 0 the
// result is bit-identical to initialization.
LmCheckpoint pretrain(const CorpusSet& corpora, const LmConfig& config,
                      const trainer::TrainConfig& train,
                      std::vector<double>* loss_trace = nullptr);

}  // namespace hieradapt::lm
