#include "hieradapt/adapters.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hieradapt/errors.hpp"
#include "hieradapt/serial.hpp"

namespace hieradapt::adapters {

using numcore::Tensor;

namespace {

constexpr std::uint32_t kStoreVersion = 1;
constexpr std::uint32_t kKindAdapters = 2;
constexpr char kMagic[4] = {'H', 'A', 'D', 'P'};

const AdapterLayer& layer_of(const AdapterParams& node, int layer) {
    if (layer < 0 || static_cast<std::size_t>(layer) >= node.layers.size())
        throw ConfigError("adapter: no parameters for transformer layer " +
                          std::to_string(layer));
    return node.layers[static_cast<std::size_t>(layer)];
}

const SharedLayerNorm::Layer& ln_of(const SharedLayerNorm& ln, int layer) {
    if (layer < 0 || static_cast<std::size_t>(layer) >= ln.layers.size())
        throw ConfigError("adapter: no shared norm for transformer layer " +
                          std::to_string(layer));
    return ln.layers[static_cast<std::size_t>(layer)];
}

}  // namespace

AdapterParams make_adapter_params(int n_layers, int d_model, int bottleneck, Rng& rng) {
    if (bottleneck < 1) throw ConfigError("adapter bottleneck must be >= 1");
    const auto m = static_cast<std::size_t>(d_model);
    const auto d = static_cast<std::size_t>(bottleneck);
    AdapterParams node;
    node.layers.resize(static_cast<std::size_t>(n_layers));
    for (auto& l : node.layers) {
        l.w_down = Tensor::randn({m, d}, rng, 0.02, true);
        l.b_down = Tensor::zeros({d}, true);
        l.w_up = Tensor::zeros({d, m}, true);
        l.b_up = Tensor::zeros({m}, true);
    }
    return node;
}

SharedLayerNorm make_shared_layer_norm(int n_layers, int d_model) {
    const auto m = static_cast<std::size_t>(d_model);
    SharedLayerNorm ln;
    ln.layers.resize(static_cast<std::size_t>(n_layers));
    for (auto& l : ln.layers) {
        l.gain = Tensor::full({m}, 1.0, true);
        l.bias = Tensor::zeros({m}, true);
    }
    return ln;
}

numcore::Tensor adapter_branch(const Tensor& h, const AdapterParams& node, int layer,
                               const SharedLayerNorm& ln, double eps) {
    const auto& al = layer_of(node, layer);
    const auto& nl = ln_of(ln, layer);
    using namespace numcore;
    Tensor normed = layer_norm(h, nl.gain, nl.bias, eps);
    Tensor down = add_bias(matmul(normed, al.w_down), al.b_down);
    return add_bias(matmul(relu(down), al.w_up), al.b_up);
}

numcore::Tensor adapter_forward(const Tensor& h, const AdapterParams& node, int layer,
                                const SharedLayerNorm& ln, double eps) {
    return numcore::add(adapter_branch(h, node, layer, ln, eps), h);
}

numcore::Tensor node_average(const Tensor& h, std::span<const AdapterParams* const> nodes,
                             int layer, const SharedLayerNorm& ln, double eps) {
    if (nodes.empty()) throw ContractError("node_average: empty node list");
    numcore::Tensor acc = adapter_branch(h, *nodes[0], layer, ln, eps);
    for (std::size_t i = 1; i < nodes.size(); ++i)
        acc = numcore::add(acc, adapter_branch(h, *nodes[i], layer, ln, eps));
    return numcore::add(h, numcore::scale(acc, 1.0 / static_cast<double>(nodes.size())));
}

std::size_t params_per_node(int n_layers, int d_model, int bottleneck, bool with_bias) {
    const auto L = static_cast<std::size_t>(n_layers);
    const auto m = static_cast<std::size_t>(d_model);
    const auto d = static_cast<std::size_t>(bottleneck);
    std::size_t per_layer = 2 * m * d;
    if (with_bias) per_layer += d + m;
    return L * per_layer;
}

const AdapterParams& AdapterStore::node(int id) const {
    auto it = nodes.find(id);
    if (it == nodes.end())
        throw ConfigError("adapter store has no node " + std::to_string(id));
    return it->second;
}

AdapterParams& AdapterStore::node(int id) {
    auto it = nodes.find(id);
    if (it == nodes.end())
        throw ConfigError("adapter store has no node " + std::to_string(id));
    return it->second;
}

std::vector<std::pair<std::string, Tensor>> AdapterStore::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& [id, node] : nodes) {
        const std::string np = "node" + std::to_string(id) + ".";
        for (std::size_t i = 0; i < node.layers.size(); ++i) {
            const std::string p = np + "layer" + std::to_string(i) + ".";
            out.emplace_back(p + "w_down", node.layers[i].w_down);
            out.emplace_back(p + "b_down", node.layers[i].b_down);
            out.emplace_back(p + "w_up", node.layers[i].w_up);
            out.emplace_back(p + "b_up", node.layers[i].b_up);
        }
    }
    for (std::size_t i = 0; i < shared.layers.size(); ++i) {
        const std::string p = "shared.layer" + std::to_string(i) + ".";
        out.emplace_back(p + "gain", shared.layers[i].gain);
        out.emplace_back(p + "bias", shared.layers[i].bias);
    }
    return out;
}

std::uint64_t AdapterStore::checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& [name, t] : named_parameters()) {
        h = io::fnv1a64_append(h, name.data(), name.size());
        auto d = t.data();
        h = io::fnv1a64_append(h, d.data(), d.size() * sizeof(double));
    }
    return h;
}

std::uint64_t AdapterStore::node_checksum(int id) const {
    const AdapterParams& n = node(id);
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& l : n.layers)
        for (const Tensor* t : {&l.w_down, &l.b_down, &l.w_up, &l.b_up}) {
            auto d = t->data();
            h = io::fnv1a64_append(h, d.data(), d.size() * sizeof(double));
        }
    return h;
}

std::size_t AdapterStore::total_params(bool with_bias) const {
    return nodes.size() * params_per_node(n_layers, d_model, bottleneck, with_bias);
}

std::size_t AdapterStore::shared_ln_params() const {
    return static_cast<std::size_t>(n_layers) * 2 * static_cast<std::size_t>(d_model);
}

void save_adapter_store(const std::filesystem::path& path, const AdapterStore& store) {
    std::ostringstream out(std::ios::binary);
    out.write(kMagic, 4);
    io::write_u32(out, kStoreVersion);
    io::write_u32(out, kKindAdapters);
    io::write_u32(out, static_cast<std::uint32_t>(store.n_layers));
    io::write_u32(out, static_cast<std::uint32_t>(store.d_model));
    io::write_u32(out, static_cast<std::uint32_t>(store.bottleneck));
    io::write_u32(out, static_cast<std::uint32_t>(store.nodes.size()));
    for (const auto& [id, _] : store.nodes) io::write_u32(out, static_cast<std::uint32_t>(id));
    const auto params = store.named_parameters();
    io::write_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params) io::write_named_tensor(out, name, t);
    io::atomic_write_file(path, out.str());
}

AdapterStore load_adapter_store(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open adapter store: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string_view(magic, 4) != std::string_view(kMagic, 4))
        throw IoError("bad adapter store magic: " + path.string());
    if (io::read_u32(in) != kStoreVersion)
        throw IoError("unsupported adapter store version: " + path.string());
    if (io::read_u32(in) != kKindAdapters)
        throw IoError("file is not an adapter store: " + path.string());
    AdapterStore store;
    store.n_layers = static_cast<int>(io::read_u32(in));
    store.d_model = static_cast<int>(io::read_u32(in));
    store.bottleneck = static_cast<int>(io::read_u32(in));
    const std::uint32_t node_count = io::read_u32(in);
    std::vector<int> ids(node_count);
    for (auto& id : ids) id = static_cast<int>(io::read_u32(in));
    Rng rng(0);
    for (int id : ids)
        store.nodes.emplace(id, make_adapter_params(store.n_layers, store.d_model,
                                                    store.bottleneck, rng));
    store.shared = make_shared_layer_norm(store.n_layers, store.d_model);
    auto params = store.named_parameters();
    const std::uint32_t count = io::read_u32(in);
    if (count != params.size())
        throw ValidationError("adapter store tensor count does not match header");
    for (std::uint32_t i = 0; i < count; ++i) {
        auto [name, loaded] = io::read_named_tensor(in);
        if (name != params[i].first)
            throw ValidationError("adapter store tensor '" + name + "' unexpected");
        Tensor dst = params[i].second;
        if (loaded.shape() != dst.shape())
            throw ValidationError("adapter store tensor '" + name + "' has wrong shape");
        std::copy(loaded.data().begin(), loaded.data().end(), dst.data().begin());
    }
    return store;
}

}  // namespace hieradapt::adapters
