#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "hieradapt/adapters.hpp"
#include "hieradapt/errors.hpp"
#include "hieradapt/grad_check.hpp"
#include "hieradapt/ops.hpp"

using namespace hieradapt;
using namespace hieradapt::adapters;
using numcore::Tensor;

namespace {

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.data()[i] != b.data()[i]) return false;
    return true;
}

void randomize(Tensor t, Rng& rng, double stddev) {
    for (double& v : t.data()) v = stddev * rng.normal();
}

}  // namespace

TEST_CASE("zero up-projection makes the adapter a bitwise identity") {
    Rng rng(1);
    AdapterParams node = make_adapter_params(2, 8, 3, rng);
    SharedLayerNorm ln = make_shared_layer_norm(2, 8);
    Tensor h = Tensor::randn({5, 8}, rng, 1.3);
    for (int layer = 0; layer < 2; ++layer) {
        Tensor out = adapter_forward(h, node, layer, ln);
        CHECK(bitwise_equal(out, h));
    }
}

TEST_CASE("hand-computed 2-dim bottleneck") {
    Rng rng(2);
    AdapterParams node = make_adapter_params(1, 2, 1, rng);
    SharedLayerNorm ln = make_shared_layer_norm(1, 2);
    // W_down = [1, 0]^T, W_up = [1, 1], biases zero; input already normalized.
    node.layers[0].w_down.data()[0] = 1.0;
    node.layers[0].w_down.data()[1] = 0.0;
    node.layers[0].w_up.data()[0] = 1.0;
    node.layers[0].w_up.data()[1] = 1.0;
    Tensor h = Tensor::from_data({1, 2}, {1.0, -1.0});
    Tensor out = adapter_forward(h, node, 0, ln);
    // The norm rescales by 1/sqrt(1 + eps); bottleneck = ReLU(that) = that.
    const double s = 1.0 / std::sqrt(1.0 + numcore::kLayerNormEps);
    CHECK(out.data()[0] == doctest::Approx(1.0 + s).epsilon(1e-12));
    CHECK(out.data()[1] == doctest::Approx(-1.0 + s).epsilon(1e-12));
    CHECK(out.data()[0] == doctest::Approx(2.0).epsilon(1e-4));
    CHECK(out.data()[1] == doctest::Approx(0.0).scale(1).epsilon(1e-4));
}

TEST_CASE("adapter gradients match finite differences") {
    Rng rng(3);
    AdapterParams node = make_adapter_params(1, 6, 3, rng);
    SharedLayerNorm ln = make_shared_layer_norm(1, 6);
    randomize(node.layers[0].w_up, rng, 0.4);
    randomize(node.layers[0].b_down, rng, 0.2);
    randomize(node.layers[0].b_up, rng, 0.2);
    randomize(ln.layers[0].gain, rng, 0.3);
    Tensor h = Tensor::randn({4, 6}, rng, 1.0, true);
    auto loss = [&]() { return numcore::sum(adapter_forward(h, node, 0, ln)); };
    CHECK(numcore::finite_diff_check(loss, h, 1e-5) <= 1e-5);
    CHECK(numcore::finite_diff_check(loss, node.layers[0].w_down, 1e-5) <= 1e-5);
    CHECK(numcore::finite_diff_check(loss, node.layers[0].w_up, 1e-5) <= 1e-5);
    CHECK(numcore::finite_diff_check(loss, node.layers[0].b_down, 1e-5) <= 1e-5);
    CHECK(numcore::finite_diff_check(loss, node.layers[0].b_up, 1e-5) <= 1e-5);
    CHECK(numcore::finite_diff_check(loss, ln.layers[0].gain, 1e-5) <= 1e-5);
    CHECK(numcore::finite_diff_check(loss, ln.layers[0].bias, 1e-5) <= 1e-5);
}

TEST_CASE("node_average of one node equals adapter_forward") {
    Rng rng(4);
    AdapterParams node = make_adapter_params(1, 4, 2, rng);
    randomize(node.layers[0].w_up, rng, 0.5);
    SharedLayerNorm ln = make_shared_layer_norm(1, 4);
    Tensor h = Tensor::randn({3, 4}, rng, 1.0);
    const AdapterParams* nodes[] = {&node};
    CHECK(bitwise_equal(node_average(h, nodes, 0, ln), adapter_forward(h, node, 0, ln)));
}

TEST_CASE("node_average over identical nodes equals the single output") {
    Rng rng(5);
    AdapterParams a = make_adapter_params(1, 4, 2, rng);
    randomize(a.layers[0].w_up, rng, 0.5);
    AdapterParams b = a;  // handles share storage, values identical
    AdapterParams c = a;
    SharedLayerNorm ln = make_shared_layer_norm(1, 4);
    Tensor h = Tensor::randn({3, 4}, rng, 1.0);
    const AdapterParams* three[] = {&a, &b, &c};
    const AdapterParams* one[] = {&a};
    Tensor avg = node_average(h, three, 0, ln);
    Tensor single = node_average(h, one, 0, ln);
    for (std::size_t i = 0; i < avg.size(); ++i)
        CHECK(avg.data()[i] == doctest::Approx(single.data()[i]).epsilon(1e-12));
}

TEST_CASE("identity node plus constant node averages to h + c/2") {
    Rng rng(6);
    AdapterParams ident = make_adapter_params(1, 4, 2, rng);
    AdapterParams constant = make_adapter_params(1, 4, 2, rng);
    const double c = 0.625;  // exactly representable through the halving
    for (double& v : constant.layers[0].b_up.data()) v = c;
    SharedLayerNorm ln = make_shared_layer_norm(1, 4);
    Tensor h = Tensor::randn({2, 4}, rng, 1.0);
    const AdapterParams* nodes[] = {&ident, &constant};
    Tensor out = node_average(h, nodes, 0, ln);
    for (std::size_t i = 0; i < out.size(); ++i)
        CHECK(out.data()[i] == h.data()[i] + c / 2.0);
}

TEST_CASE("zero-initialized path averages to h bitwise") {
    Rng rng(7);
    AdapterParams a = make_adapter_params(2, 8, 3, rng);
    AdapterParams b = make_adapter_params(2, 8, 3, rng);
    AdapterParams c = make_adapter_params(2, 8, 3, rng);
    SharedLayerNorm ln = make_shared_layer_norm(2, 8);
    Tensor h = Tensor::randn({6, 8}, rng, 2.0);
    const AdapterParams* nodes[] = {&a, &b, &c};
    for (int layer = 0; layer < 2; ++layer)
        CHECK(bitwise_equal(node_average(h, nodes, layer, ln), h));
}

TEST_CASE("node_average rejects an empty node list") {
    SharedLayerNorm ln = make_shared_layer_norm(1, 4);
    Tensor h = Tensor::zeros({2, 4});
    std::span<const AdapterParams* const> empty;
    CHECK_THROWS_AS(node_average(h, empty, 0, ln), ContractError);
}

TEST_CASE("missing layer parameters raise a configuration error") {
    Rng rng(8);
    AdapterParams node = make_adapter_params(1, 4, 2, rng);
    SharedLayerNorm ln = make_shared_layer_norm(1, 4);
    Tensor h = Tensor::zeros({2, 4});
    CHECK_THROWS_AS(adapter_forward(h, node, 3, ln), ConfigError);
}

TEST_CASE("shared norm writes through to every node's output") {
    Rng rng(9);
    AdapterParams a = make_adapter_params(1, 4, 2, rng);
    AdapterParams b = make_adapter_params(1, 4, 2, rng);
    randomize(a.layers[0].w_up, rng, 0.5);
    randomize(b.layers[0].w_up, rng, 0.5);
    SharedLayerNorm ln = make_shared_layer_norm(1, 4);
    Tensor h = Tensor::randn({2, 4}, rng, 1.0);
    Tensor a_before = adapter_forward(h, a, 0, ln);
    Tensor b_before = adapter_forward(h, b, 0, ln);
    for (double& v : ln.layers[0].gain.data()) v = 1.7;
    CHECK_FALSE(bitwise_equal(adapter_forward(h, a, 0, ln), a_before));
    CHECK_FALSE(bitwise_equal(adapter_forward(h, b, 0, ln), b_before));
}

TEST_CASE("parameter count formula") {
    CHECK(params_per_node(12, 768, 256, false) == 4718592);
    CHECK(params_per_node(12, 768, 256, true) == 4730880);
    CHECK(params_per_node(1, 4, 2, true) == 22);
    CHECK(params_per_node(1, 4, 2, false) == 16);
}

TEST_CASE("store parameter totals count every node plus the shared norm") {
    Rng rng(10);
    AdapterStore store;
    store.n_layers = 2;
    store.d_model = 6;
    store.bottleneck = 3;
    for (int id : {1, 2, 3}) store.nodes.emplace(id, make_adapter_params(2, 6, 3, rng));
    store.shared = make_shared_layer_norm(2, 6);
    CHECK(store.total_params(true) == 3 * params_per_node(2, 6, 3, true));
    CHECK(store.shared_ln_params() == 2 * 2 * 6);
    // The formula agrees with the actual tensor element counts.
    std::size_t actual = 0;
    for (const auto& [name, t] : store.named_parameters())
        if (name.rfind("shared.", 0) != 0) actual += t.size();
    CHECK(actual == store.total_params(true));
}

TEST_CASE("adapter store round-trips bit-exactly") {
    Rng rng(11);
    AdapterStore store;
    store.n_layers = 2;
    store.d_model = 6;
    store.bottleneck = 3;
    for (int id : {0, 1, 4}) {
        auto node = make_adapter_params(2, 6, 3, rng);
        randomize(node.layers[0].w_up, rng, 0.5);
        store.nodes.emplace(id, std::move(node));
    }
    store.shared = make_shared_layer_norm(2, 6);
    randomize(store.shared.layers[1].bias, rng, 0.2);
    const auto path = std::filesystem::temp_directory_path() / "hieradapt_adapters_test.bin";
    save_adapter_store(path, store);
    AdapterStore loaded = load_adapter_store(path);
    CHECK(loaded.checksum() == store.checksum());
    CHECK(loaded.nodes.size() == 3);
    CHECK(loaded.node_checksum(4) == store.node_checksum(4));
    std::filesystem::remove(path);
}
