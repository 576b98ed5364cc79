#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "hieradapt/rng.hpp"

namespace hieradapt::numcore {

// Dense row-major tensor of doubles with an optional gradient buffer.
// The handle is cheap to copy; copies share storage. Values are immutable
// once an operation has produced them, only grad buffers mutate afterwards.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<std::size_t> shape, double value, bool requires_grad = false);
    static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> values,
                            bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor randn(std::vector<std::size_t> shape, Rng& rng, double stddev,
                        bool requires_grad = false);

    bool defined() const { return static_cast<bool>(s_); }
    const std::vector<std::size_t>& shape() const;
    std::size_t rank() const;
    std::size_t dim(std::size_t i) const;
    std::size_t size() const;

    std::span<double> data();
    std::span<const double> data() const;
    double value() const;  // scalar tensors only

    bool requires_grad() const;
    void set_requires_grad(bool v);

    // Gradient buffer, allocated to zeros on first access.
    std::span<double> grad();
    bool has_grad() const;
    std::span<const double> grad_view() const;  // requires has_grad()
    void zero_grad();

    // True when both handles alias the same storage.
    bool same_storage(const Tensor& other) const { return s_ == other.s_; }

private:
    struct Storage {
        std::vector<std::size_t> shape;
        std::vector<double> data;
        std::vector<double> grad;
        bool requires_grad = false;
    };
    std::shared_ptr<Storage> s_;

    explicit Tensor(std::shared_ptr<Storage> s) : s_(std::move(s)) {}
};

// Records the backward closure of every executed primitive. A tape activates
// on construction and deactivates on destruction; tensors created while it is
// active record onto it. One tape per worker; tapes never cross threads.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Seeds d(loss)/d(loss) = seed and walks the recorded ops in reverse,
    // accumulating into every reachable grad buffer. Single use.
    void backward(const Tensor& loss, double seed = 1.0);

    std::size_t op_count() const { return ops_.size(); }

    static Tape* current();
    static void record(std::function<void()> backward_fn);

    // Disables recording for the guarded scope (read-only evaluation).
    class Suspend {
    public:
        Suspend();
        ~Suspend();
        Suspend(const Suspend&) = delete;
        Suspend& operator=(const Suspend&) = delete;

    private:
        Tape* saved_;
    };

private:
    std::vector<std::function<void()>> ops_;
    Tape* prev_ = nullptr;
    bool consumed_ = false;
};

}  // namespace hieradapt::numcore
