#include "hieradapt/lm.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "hieradapt/errors.hpp"
#include "hieradapt/ops.hpp"
#include "hieradapt/optim.hpp"
#include "hieradapt/serial.hpp"

namespace hieradapt::lm {

using numcore::Tensor;

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint32_t kKindBackbone = 1;
constexpr char kMagic[4] = {'H', 'A', 'D', 'P'};

std::string layer_prefix(int i) { return "layer" + std::to_string(i) + "."; }

}  // namespace

void LmConfig::validate() const {
    if (n_layers < 1) throw ConfigError("lm: n_layers must be >= 1");
    if (d_model < 2) throw ConfigError("lm: d_model must be >= 2");
    if (n_heads < 1 || d_model % n_heads != 0)
        throw ConfigError("lm: n_heads must divide d_model");
    if (context_len < 2) throw ConfigError("lm: context_len must be >= 2");
    if (vocab_size < 4) throw ConfigError("lm: vocab_size must be >= 4");
}

LmModel LmModel::init(const LmConfig& config, std::uint64_t seed) {
    config.validate();
    const auto m = static_cast<std::size_t>(config.d_model);
    const auto v = static_cast<std::size_t>(config.vocab_size);
    const auto ctx = static_cast<std::size_t>(config.context_len);
    Rng rng(Rng::derive(seed, 0x6c6d));

    LmModel model;
    model.cfg_ = config;
    model.wte = Tensor::randn({v, m}, rng, 0.02, true);
    model.wpe = Tensor::randn({ctx, m}, rng, 0.01, true);
    model.layers.resize(static_cast<std::size_t>(config.n_layers));
    for (auto& layer : model.layers) {
        layer.ln1_gain = Tensor::full({m}, 1.0, true);
        layer.ln1_bias = Tensor::zeros({m}, true);
        layer.wq = Tensor::randn({m, m}, rng, 0.02, true);
        layer.bq = Tensor::zeros({m}, true);
        layer.wk = Tensor::randn({m, m}, rng, 0.02, true);
        layer.bk = Tensor::zeros({m}, true);
        layer.wv = Tensor::randn({m, m}, rng, 0.02, true);
        layer.bv = Tensor::zeros({m}, true);
        layer.wo = Tensor::randn({m, m}, rng, 0.02, true);
        layer.bo = Tensor::zeros({m}, true);
        layer.ln2_gain = Tensor::full({m}, 1.0, true);
        layer.ln2_bias = Tensor::zeros({m}, true);
        layer.w_mlp_in = Tensor::randn({m, 4 * m}, rng, 0.02, true);
        layer.b_mlp_in = Tensor::zeros({4 * m}, true);
        layer.w_mlp_out = Tensor::randn({4 * m, m}, rng, 0.02, true);
        layer.b_mlp_out = Tensor::zeros({m}, true);
    }
    model.lnf_gain = Tensor::full({m}, 1.0, true);
    model.lnf_bias = Tensor::zeros({m}, true);
    return model;
}

std::vector<std::pair<std::string, Tensor>> LmModel::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("wte", wte);
    out.emplace_back("wpe", wpe);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        const std::string p = layer_prefix(static_cast<int>(i));
        out.emplace_back(p + "ln1.gain", l.ln1_gain);
        out.emplace_back(p + "ln1.bias", l.ln1_bias);
        out.emplace_back(p + "attn.wq", l.wq);
        out.emplace_back(p + "attn.bq", l.bq);
        out.emplace_back(p + "attn.wk", l.wk);
        out.emplace_back(p + "attn.bk", l.bk);
        out.emplace_back(p + "attn.wv", l.wv);
        out.emplace_back(p + "attn.bv", l.bv);
        out.emplace_back(p + "attn.wo", l.wo);
        out.emplace_back(p + "attn.bo", l.bo);
        out.emplace_back(p + "ln2.gain", l.ln2_gain);
        out.emplace_back(p + "ln2.bias", l.ln2_bias);
        out.emplace_back(p + "mlp.w_in", l.w_mlp_in);
        out.emplace_back(p + "mlp.b_in", l.b_mlp_in);
        out.emplace_back(p + "mlp.w_out", l.w_mlp_out);
        out.emplace_back(p + "mlp.b_out", l.b_mlp_out);
    }
    out.emplace_back("ln_f.gain", lnf_gain);
    out.emplace_back("ln_f.bias", lnf_bias);
    return out;
}

void LmModel::set_requires_grad(bool v) {
    for (auto& [_, t] : named_parameters()) {
        Tensor tt = t;
        tt.set_requires_grad(v);
    }
}

void LmModel::zero_grads() {
    for (auto& [_, t] : named_parameters()) {
        Tensor tt = t;
        tt.zero_grad();
    }
}

std::uint64_t LmModel::checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& [name, t] : named_parameters()) {
        h = io::fnv1a64_append(h, name.data(), name.size());
        auto d = t.data();
        h = io::fnv1a64_append(h, d.data(), d.size() * sizeof(double));
    }
    return h;
}

numcore::Tensor LmModel::embed_tokens(std::span<const int> ids) const {
    if (ids.empty()) throw ContractError("lm: empty token sequence");
    if (ids.size() > static_cast<std::size_t>(cfg_.context_len))
        throw ContractError("lm: sequence of " + std::to_string(ids.size()) +
                            " tokens exceeds context of " + std::to_string(cfg_.context_len));
    std::vector<int> positions(ids.size());
    std::iota(positions.begin(), positions.end(), 0);
    return numcore::add(numcore::gather_rows(wte, ids), numcore::gather_rows(wpe, positions));
}

numcore::Tensor LmModel::block_forward(const Tensor& x, int layer) const {
    const auto& l = layers.at(static_cast<std::size_t>(layer));
    using namespace numcore;
    Tensor a = layer_norm(x, l.ln1_gain, l.ln1_bias);
    Tensor q = add_bias(matmul(a, l.wq), l.bq);
    Tensor k = add_bias(matmul(a, l.wk), l.bk);
    Tensor v = add_bias(matmul(a, l.wv), l.bv);
    Tensor att = causal_self_attention(q, k, v, static_cast<std::size_t>(cfg_.n_heads));
    Tensor x1 = add(x, add_bias(matmul(att, l.wo), l.bo));
    Tensor b = layer_norm(x1, l.ln2_gain, l.ln2_bias);
    Tensor h = gelu(add_bias(matmul(b, l.w_mlp_in), l.b_mlp_in));
    return add(x1, add_bias(matmul(h, l.w_mlp_out), l.b_mlp_out));
}

numcore::Tensor LmModel::forward_hidden(std::span<const int> ids,
                                        const AdapterHook& hook) const {
    Tensor x = embed_tokens(ids);
    for (int i = 0; i < cfg_.n_layers; ++i) {
        x = block_forward(x, i);
        if (hook) x = hook(x, i);
    }
    return x;
}

numcore::Tensor LmModel::logits_from_hidden(const Tensor& h) const {
    Tensor normed = numcore::layer_norm(h, lnf_gain, lnf_bias);
    return numcore::matmul_nt(normed, wte);
}

numcore::Tensor LmModel::forward_logits(std::span<const int> ids,
                                        const AdapterHook& hook) const {
    return logits_from_hidden(forward_hidden(ids, hook));
}

std::vector<double> LmModel::embed_sequence(std::span<const int> ids) const {
    if (ids.empty()) throw ContractError("embed_sequence: empty sequence");
    numcore::Tape::Suspend no_tape;
    Tensor h = forward_hidden(ids, {});
    const std::size_t t = h.dim(0), m = h.dim(1);
    std::vector<double> pooled(m, 0.0);
    auto hv = h.data();
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < m; ++j) pooled[j] += hv[i * m + j];
    for (double& v : pooled) v /= static_cast<double>(t);
    return pooled;
}

numcore::Tensor window_loss(const LmModel& model, std::span<const int> ids,
                            const AdapterHook& hook) {
    if (ids.size() < 2) throw ContractError("window_loss: need at least 2 tokens");
    numcore::Tensor logits = model.forward_logits(ids, hook);
    numcore::Tensor inputs = numcore::slice_rows(logits, 0, ids.size() - 1);
    std::vector<int> targets(ids.begin() + 1, ids.end());
    return numcore::softmax_cross_entropy(inputs, targets);
}

void save_lm_checkpoint(const std::filesystem::path& path, const LmCheckpoint& ckpt) {
    if (!ckpt.model.defined()) throw ContractError("cannot save an undefined model");
    std::ostringstream out(std::ios::binary);
    out.write(kMagic, 4);
    io::write_u32(out, kCheckpointVersion);
    io::write_u32(out, kKindBackbone);
    const auto& c = ckpt.model.config();
    io::write_u32(out, static_cast<std::uint32_t>(c.n_layers));
    io::write_u32(out, static_cast<std::uint32_t>(c.d_model));
    io::write_u32(out, static_cast<std::uint32_t>(c.n_heads));
    io::write_u32(out, static_cast<std::uint32_t>(c.context_len));
    io::write_u32(out, static_cast<std::uint32_t>(c.vocab_size));
    io::write_u64(out, ckpt.step);
    const auto params = ckpt.model.named_parameters();
    io::write_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params) io::write_named_tensor(out, name, t);
    io::atomic_write_file(path, out.str());
}

LmCheckpoint load_lm_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string_view(magic, 4) != std::string_view(kMagic, 4))
        throw IoError("bad checkpoint magic: " + path.string());
    if (io::read_u32(in) != kCheckpointVersion)
        throw IoError("unsupported checkpoint version: " + path.string());
    if (io::read_u32(in) != kKindBackbone)
        throw IoError("checkpoint is not a backbone: " + path.string());
    LmConfig cfg;
    cfg.n_layers = static_cast<int>(io::read_u32(in));
    cfg.d_model = static_cast<int>(io::read_u32(in));
    cfg.n_heads = static_cast<int>(io::read_u32(in));
    cfg.context_len = static_cast<int>(io::read_u32(in));
    cfg.vocab_size = static_cast<int>(io::read_u32(in));
    LmCheckpoint ckpt;
    ckpt.step = io::read_u64(in);
    ckpt.model = LmModel::init(cfg, 0);
    const std::uint32_t count = io::read_u32(in);
    auto params = ckpt.model.named_parameters();
    if (count != params.size())
        throw ValidationError("checkpoint tensor count does not match config");
    for (std::uint32_t i = 0; i < count; ++i) {
        auto [name, loaded] = io::read_named_tensor(in);
        if (name != params[i].first)
            throw ValidationError("checkpoint tensor '" + name + "' unexpected, wanted '" +
                                  params[i].first + "'");
        Tensor dst = params[i].second;
        if (loaded.shape() != dst.shape())
            throw ValidationError("checkpoint tensor '" + name +
                                  "' does not match the declared architecture");
        std::copy(loaded.data().begin(), loaded.data().end(), dst.data().begin());
    }
    return ckpt;
}

LmCheckpoint pretrain(const CorpusSet& corpora, const LmConfig& config,
                      const trainer::TrainConfig& train, std::vector<double>* loss_trace) {
    config.validate();
    train.validate();
    for (const auto& [name, stream] : corpora.domains)
        if (stream.empty()) throw DataError("empty corpus for domain: " + name);
    if (corpora.domains.empty()) throw DataError("pretrain: no domains");

    LmModel model = LmModel::init(config, train.seed);
    const auto names = corpora.domain_names();
    Rng rng(Rng::derive(train.seed, 0x7072));
    auto params = model.named_parameters();
    std::vector<trainer::AdamState> states(params.size());
    trainer::AdamHyper hp;


    const int windows_per_step = train.batch_size * train.accum_steps;
    const double grad_scale = 1.0 / static_cast<double>(windows_per_step);
    for (int step = 0; step < train.total_steps; ++step) {
        hp.lr = trainer::effective_lr(train, step);
        std::size_t pick = 0;
        if (train.sampling == trainer::Sampling::kRoundRobin)
            pick = static_cast<std::size_t>(step) % names.size();
        else
            pick = rng.uniform_index(names.size());
        const auto& stream = corpora.stream(names[pick]);
        double step_loss = 0.0;
        for (int w = 0; w < windows_per_step; ++w) {
            const auto window = sample_window(stream, train.seq_len, rng, names[pick]);
            numcore::Tape tape;
            numcore::Tensor loss = window_loss(model, window);
            step_loss += loss.value() * grad_scale;
            tape.backward(loss, grad_scale);
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            numcore::Tensor t = params[i].second;
            if (t.has_grad()) {
                trainer::adam_step(t, t.grad(), states[i], hp);
                t.zero_grad();
            }
        }
        if (loss_trace) loss_trace->push_back(step_loss);
    }
    return LmCheckpoint{std::move(model), static_cast<std::uint64_t>(train.total_steps)};
}

}  // namespace hieradapt::lm
