#include "hieradapt/tensor.hpp"

#include <cmath>
#include <numeric>
#include <utility>

#include "hieradapt/errors.hpp"

namespace hieradapt::numcore {

namespace {

thread_local Tape* g_current_tape = nullptr;

std::size_t shape_size(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0) throw DimensionError("tensor dimensions must be positive");
        n *= d;
    }
    return n;
}

}  // namespace

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    auto s = std::make_shared<Storage>();
    s->data.assign(shape_size(shape), 0.0);
    s->shape = std::move(shape);
    s->requires_grad = requires_grad;
    return Tensor(std::move(s));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (double& v : t.data()) v = value;
    return t;
}

Tensor Tensor::from_data(std::vector<std::size_t> shape, std::vector<double> values,
                         bool requires_grad) {
    if (shape_size(shape) != values.size())
        throw DimensionError("tensor data length does not match shape");
    auto s = std::make_shared<Storage>();
    s->shape = std::move(shape);
    s->data = std::move(values);
    s->requires_grad = requires_grad;
    return Tensor(std::move(s));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::randn(std::vector<std::size_t> shape, Rng& rng, double stddev,
                     bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (double& v : t.data()) v = stddev * rng.normal();
    return t;
}

const std::vector<std::size_t>& Tensor::shape() const {
    if (!s_) throw ContractError("use of undefined tensor");
    return s_->shape;
}

std::size_t Tensor::rank() const { return shape().size(); }

std::size_t Tensor::dim(std::size_t i) const {
    const auto& sh = shape();
    if (i >= sh.size()) throw DimensionError("tensor dimension index out of range");
    return sh[i];
}

std::size_t Tensor::size() const {
    if (!s_) throw ContractError("use of undefined tensor");
    return s_->data.size();
}

std::span<double> Tensor::data() {
    if (!s_) throw ContractError("use of undefined tensor");
    return s_->data;
}

std::span<const double> Tensor::data() const {
    if (!s_) throw ContractError("use of undefined tensor");
    return s_->data;
}

double Tensor::value() const {
    if (size() != 1) throw ContractError("value() requires a scalar tensor");
    return s_->data[0];
}

bool Tensor::requires_grad() const {
    if (!s_) throw ContractError("use of undefined tensor");
    return s_->requires_grad;
}

void Tensor::set_requires_grad(bool v) {
    if (!s_) throw ContractError("use of undefined tensor");
    s_->requires_grad = v;
}

std::span<double> Tensor::grad() {
    if (!s_) throw ContractError("use of undefined tensor");
    if (s_->grad.empty()) s_->grad.assign(s_->data.size(), 0.0);
    return s_->grad;
}

bool Tensor::has_grad() const {
    if (!s_) throw ContractError("use of undefined tensor");
    return !s_->grad.empty();
}

std::span<const double> Tensor::grad_view() const {
    if (!s_ || s_->grad.empty()) throw ContractError("grad_view() on tensor without grad");
    return s_->grad;
}

void Tensor::zero_grad() {
    if (!s_) throw ContractError("use of undefined tensor");
    std::fill(s_->grad.begin(), s_->grad.end(), 0.0);
}

Tape::Tape() {
    prev_ = g_current_tape;
    g_current_tape = this;
}

Tape::~Tape() { g_current_tape = prev_; }

Tape* Tape::current() { return g_current_tape; }

Tape::Suspend::Suspend() : saved_(g_current_tape) { g_current_tape = nullptr; }
Tape::Suspend::~Suspend() { g_current_tape = saved_; }

void Tape::record(std::function<void()> backward_fn) {
    if (g_current_tape) g_current_tape->ops_.push_back(std::move(backward_fn));
}

void Tape::backward(const Tensor& loss, double seed) {
    if (loss.size() != 1) throw ContractError("backward requires a scalar loss");
    if (!loss.requires_grad())
        throw ContractError("backward requires a loss connected to differentiable inputs");
    if (consumed_) throw ContractError("tape backward may run only once");
    consumed_ = true;
    Tensor seed_target = loss;
    seed_target.grad()[0] += seed;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

}  // namespace hieradapt::numcore
