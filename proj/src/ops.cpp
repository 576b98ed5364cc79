#include "hieradapt/ops.hpp"

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "hieradapt/errors.hpp"

namespace hieradapt::numcore {

namespace {

std::string shape_str(const Tensor& t) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < t.rank(); ++i) {
        if (i) out << 'x';
        out << t.shape()[i];
    }
    out << ']';
    return out.str();
}

void ensure_finite(const Tensor& t, const char* op) {
    for (double v : t.data()) {
        if (!std::isfinite(v))
            throw NumericError(std::string(op) + " produced a non-finite value");
    }
}

bool wants_grad(const Tensor& a) { return a.requires_grad(); }
bool wants_grad(const Tensor& a, const Tensor& b) {
    return a.requires_grad() || b.requires_grad();
}

void maybe_record(Tensor& out, std::function<void()> fn) {
    if (out.requires_grad() && Tape::current()) Tape::record(std::move(fn));
}

// Dense kernels. Every output element accumulates over its reduction index in
// increasing order, so results are bit-identical regardless of thread count.
void mm_nn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (m > 1 && m * n * k > 32768)
#endif
    for (long long ii = 0; ii < static_cast<long long>(m); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double* crow = c.data() + i * n;
        const double* arow = a.data() + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const double* brow = b.data() + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c[m,n] += a[m,k] * b[n,k]^T
void mm_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (m > 1 && m * n * k > 32768)
#endif
    for (long long ii = 0; ii < static_cast<long long>(m); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const double* arow = a.data() + i * k;
        double* crow = c.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b.data() + j * k;
            double acc = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            crow[j] += acc;
        }
    }
}

// c[k,n] += a[m,k]^T * b[m,n]
void mm_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (k > 1 && m * n * k > 32768)
#endif
    for (long long kk2 = 0; kk2 < static_cast<long long>(k); ++kk2) {
        const auto kk = static_cast<std::size_t>(kk2);
        double* crow = c.data() + kk * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = a[i * k + kk];
            const double* brow = b.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                             shape_str(b));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out = Tensor::zeros(a.shape(), wants_grad(a, b));
    auto av = a.data();
    auto bv = b.data();
    auto ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
    ensure_finite(out, "add");
    maybe_record(out, [a = a, b = b, out]() mutable {
        if (!out.has_grad()) return;
        auto go = out.grad_view();
        if (a.requires_grad()) {
            auto ga = a.grad();
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        }
        if (b.requires_grad()) {
            auto gb = b.grad();
            for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
        }
    });
    return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (bias.rank() != 1 || x.rank() < 1 || x.shape().back() != bias.dim(0))
        throw DimensionError("add_bias: bias " + shape_str(bias) +
                             " does not match last dim of " + shape_str(x));
    const std::size_t m = bias.dim(0);
    const std::size_t rows = x.size() / m;
    Tensor out = Tensor::zeros(x.shape(), wants_grad(x, bias));
    auto xv = x.data();
    auto bv = bias.data();
    auto ov = out.data();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < m; ++j) ov[r * m + j] = xv[r * m + j] + bv[j];
    ensure_finite(out, "add_bias");
    maybe_record(out, [x = x, bias = bias, out, rows, m]() mutable {
        if (!out.has_grad()) return;
        auto go = out.grad_view();
        if (x.requires_grad()) {
            auto gx = x.grad();
            for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
        }
        if (bias.requires_grad()) {
            auto gb = bias.grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < m; ++j) gb[j] += go[r * m + j];
        }
    });
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out = Tensor::zeros(a.shape(), wants_grad(a, b));
    auto av = a.data();
    auto bv = b.data();
    auto ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
    ensure_finite(out, "mul");
    maybe_record(out, [a = a, b = b, out]() mutable {
        if (!out.has_grad()) return;
        auto go = out.grad_view();
        if (a.requires_grad()) {
            auto ga = a.grad();
            auto bv2 = b.data();
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv2[i];
        }
        if (b.requires_grad()) {
            auto gb = b.grad();
            auto av2 = a.data();
            for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av2[i];
        }
    });
    return out;
}

Tensor scale(const Tensor& a, double c) {
    Tensor out = Tensor::zeros(a.shape(), wants_grad(a));
    auto av = a.data();
    auto ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * c;
    ensure_finite(out, "scale");
    maybe_record(out, [a = a, out, c]() mutable {
        if (!out.has_grad()) return;
        auto go = out.grad_view();
        if (a.requires_grad()) {
            auto ga = a.grad();
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * c;
        }
    });
    return out;
}

Tensor relu(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape(), wants_grad(a));
    auto av = a.data();
    auto ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] > 0.0 ? av[i] : 0.0;
    ensure_finite(out, "relu");
    maybe_record(out, [a = a, out]() mutable {
        if (!out.has_grad()) return;
        auto go = out.grad_view();
        if (a.requires_grad()) {
            auto ga = a.grad();
            auto av2 = a.data();
            for (std::size_t i = 0; i < go.size(); ++i)
                if (av2[i] > 0.0) ga[i] += go[i];
        }
    });
    return out;
}

Tensor gelu(const Tensor& a) {
    static constexpr double kInvSqrt2 = 0.70710678118654752440;
    static constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    Tensor out = Tensor::zeros(a.shape(), wants_grad(a));
    auto av = a.data();
    auto ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i)
        ov[i] = 0.5 * av[i] * (1.0 + std::erf(av[i] * kInvSqrt2));
    ensure_finite(out, "gelu");
    maybe_record(out, [a = a, out]() mutable {
        if (!out.has_grad()) return;
        auto go = out.grad_view();
        if (a.requires_grad()) {
            auto ga = a.grad();
            auto av2 = a.data();
            for (std::size_t i = 0; i < go.size(); ++i) {
                const double x = av2[i];
                const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                ga[i] += go[i] * (cdf + x * pdf);
            }
        }
    });
    return out;
}

Tensor sum(const Tensor& a) {
    Tensor out = Tensor::zeros({1}, wants_grad(a));
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    out.data()[0] = acc;
    ensure_finite(out, "sum");
    maybe_record(out, [a = a, out]() mutable {
        if (!out.has_grad()) return;
        const double go = out.grad_view()[0];
        if (a.requires_grad()) {
            auto ga = a.grad();
            for (double& g : ga) g += go;
        }
    });
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw DimensionError("matmul: incompatible shapes " + shape_str(a) + " and " +
                             shape_str(b));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = Tensor::zeros({m, n}, wants_grad(a, b));
    mm_nn_acc(a.data(), b.data(), out.data(), m, k, n);
    ensure_finite(out, "matmul");
    maybe_record(out, [a = a, b = b, out, m, k, n]() mutable {
        if (!out.has_grad()) return;
        auto go = out.grad_view();
        if (a.requires_grad()) mm_nt_acc(go, b.data(), a.grad(), m, n, k);
        if (b.requires_grad()) mm_tn_acc(a.data(), go, b.grad(), m, k, n);
    });
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
        throw DimensionError("matmul_nt: incompatible shapes " + shape_str(a) + " and " +
                             shape_str(b));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    Tensor out = Tensor::zeros({m, n}, wants_grad(a, b));
    mm_nt_acc(a.data(), b.data(), out.data(), m, k, n);
    ensure_finite(out, "matmul_nt");
    maybe_record(out, [a = a, b = b, out, m, k, n]() mutable {
        if (!out.has_grad()) return;
        auto go = out.grad_view();
        if (a.requires_grad()) mm_nn_acc(go, b.data(), a.grad(), m, n, k);
        if (b.requires_grad()) mm_tn_acc(go, a.data(), b.grad(), m, n, k);
    });
    return out;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
    if (x.rank() != 2) throw DimensionError("slice_rows expects a 2-d tensor");
    if (begin + count > x.dim(0) || count == 0)
        throw DimensionError("slice_rows: range out of bounds");
    const std::size_t n = x.dim(1);
    Tensor out = Tensor::zeros({count, n}, wants_grad(x));
    auto xv = x.data();
    auto ov = out.data();
    std::copy(xv.begin() + begin * n, xv.begin() + (begin + count) * n, ov.begin());
    maybe_record(out, [x = x, out, begin, count, n]() mutable {
        if (!out.has_grad()) return;
        auto go = out.grad_view();
        if (x.requires_grad()) {
            auto gx = x.grad();
            for (std::size_t i = 0; i < count * n; ++i) gx[begin * n + i] += go[i];
        }
    });
    return out;
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
    if (table.rank() != 2) throw DimensionError("gather_rows expects a 2-d table");
    const std::size_t rows = table.dim(0), n = table.dim(1);
    for (int id : ids)
        if (id < 0 || static_cast<std::size_t>(id) >= rows)
            throw IndexError("gather_rows: id " + std::to_string(id) + " out of range");
    Tensor out = Tensor::zeros({ids.size(), n}, wants_grad(table));
    auto tv = table.data();
    auto ov = out.data();
    for (std::size_t r = 0; r < ids.size(); ++r)
        std::copy(tv.begin() + static_cast<std::size_t>(ids[r]) * n,
                  tv.begin() + (static_cast<std::size_t>(ids[r]) + 1) * n, ov.begin() + r * n);
    std::vector<int> ids_copy(ids.begin(), ids.end());
    maybe_record(out, [table = table, out, ids = std::move(ids_copy), n]() mutable {
        if (!out.has_grad()) return;
        auto go = out.grad_view();
        if (table.requires_grad()) {
            auto gt = table.grad();
            for (std::size_t r = 0; r < ids.size(); ++r) {
                const std::size_t row = static_cast<std::size_t>(ids[r]);
                for (std::size_t j = 0; j < n; ++j) gt[row * n + j] += go[r * n + j];
            }
        }
    });
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (x.rank() < 1) throw DimensionError("layer_norm expects at least 1-d input");
    const std::size_t m = x.shape().back();
    if (m < 2) throw ContractError("layer_norm: normalized dimension must have >= 2 elements");
    if (eps <= 0.0) throw ContractError("layer_norm: eps must be positive");
    if (gain.rank() != 1 || gain.dim(0) != m || bias.rank() != 1 || bias.dim(0) != m)
        throw DimensionError("layer_norm: gain/bias must be vectors of length " +
                             std::to_string(m));
    const std::size_t rows = x.size() / m;
    Tensor out = Tensor::zeros(x.shape(), x.requires_grad() || gain.requires_grad() ||
                                              bias.requires_grad());
    // Normalized values are kept for the backward pass.
    auto xhat = std::make_shared<std::vector<double>>(x.size());
    auto inv_sigma = std::make_shared<std::vector<double>>(rows);
    auto xv = x.data();
    auto gv = gain.data();
    auto bv = bias.data();
    auto ov = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xv.data() + r * m;
        double mean = 0.0;
        for (std::size_t j = 0; j < m; ++j) mean += row[j];
        mean /= static_cast<double>(m);
        double var = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double d = row[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(m);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_sigma)[r] = is;
        for (std::size_t j = 0; j < m; ++j) {
            const double h = (row[j] - mean) * is;
            (*xhat)[r * m + j] = h;
            ov[r * m + j] = gv[j] * h + bv[j];
        }
    }
    ensure_finite(out, "layer_norm");
    maybe_record(out, [x = x, gain = gain, bias = bias, out, xhat, inv_sigma, rows,
                       m]() mutable {
        if (!out.has_grad()) return;
        auto go = out.grad_view();
        auto gv = gain.data();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* gout = go.data() + r * m;
            const double* h = xhat->data() + r * m;
            if (gain.requires_grad()) {
                auto gg = gain.grad();
                for (std::size_t j = 0; j < m; ++j) gg[j] += gout[j] * h[j];
            }
            if (bias.requires_grad()) {
                auto gb = bias.grad();
                for (std::size_t j = 0; j < m; ++j) gb[j] += gout[j];
            }
            if (x.requires_grad()) {
                auto gx = x.grad();
                double sum_g = 0.0, sum_gh = 0.0;
                for (std::size_t j = 0; j < m; ++j) {
                    const double ghat = gout[j] * gv[j];
                    sum_g += ghat;
                    sum_gh += ghat * h[j];
                }
                const double inv_m = 1.0 / static_cast<double>(m);
                const double is = (*inv_sigma)[r];
                for (std::size_t j = 0; j < m; ++j) {
                    const double ghat = gout[j] * gv[j];
                    gx[r * m + j] += is * (ghat - inv_m * sum_g - h[j] * inv_m * sum_gh);
                }
            }
        }
    });
    return out;
}

Tensor softmax(const Tensor& x) {
    if (x.rank() < 1) throw DimensionError("softmax expects at least 1-d input");
    const std::size_t m = x.shape().back();
    const std::size_t rows = x.size() / m;
    Tensor out = Tensor::zeros(x.shape(), wants_grad(x));
    auto xv = x.data();
    auto ov = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xv.data() + r * m;
        double mx = row[0];
        for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double e = std::exp(row[j] - mx);
            ov[r * m + j] = e;
            z += e;
        }
        for (std::size_t j = 0; j < m; ++j) ov[r * m + j] /= z;
    }
    ensure_finite(out, "softmax");
    maybe_record(out, [x = x, out, rows, m]() mutable {
        if (!out.has_grad()) return;
        auto go = out.grad_view();
        if (!x.requires_grad()) return;
        auto gx = x.grad();
        auto pv = out.data();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* p = pv.data() + r * m;
            const double* g = go.data() + r * m;
            double dot = 0.0;
            for (std::size_t j = 0; j < m; ++j) dot += p[j] * g[j];
            for (std::size_t j = 0; j < m; ++j) gx[r * m + j] += p[j] * (g[j] - dot);
        }
    });
    return out;
}

Tensor causal_self_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                             std::size_t n_heads) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
        throw DimensionError("attention expects 2-d q/k/v");
    if (q.shape() != k.shape() || q.shape() != v.shape())
        throw DimensionError("attention: q/k/v shapes differ");
    const std::size_t t = q.dim(0), m = q.dim(1);
    if (n_heads == 0 || m % n_heads != 0)
        throw DimensionError("attention: model dim must be divisible by head count");
    const std::size_t dh = m / n_heads;
    const double scale_f = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor out = Tensor::zeros({t, m}, q.requires_grad() || k.requires_grad() ||
                                           v.requires_grad());
    // probs[h][i][j] for j <= i, kept for backward.
    auto probs = std::make_shared<std::vector<double>>(n_heads * t * t, 0.0);
    auto qv = q.data();
    auto kv = k.data();
    auto vv = v.data();
    auto ov = out.data();
    for (std::size_t h = 0; h < n_heads; ++h) {
        const std::size_t off = h * dh;
        double* p_h = probs->data() + h * t * t;
        for (std::size_t i = 0; i < t; ++i) {
            double* p_row = p_h + i * t;
            double mx = -1e300;
            for (std::size_t j = 0; j <= i; ++j) {
                double s = 0.0;
                const double* qi = qv.data() + i * m + off;
                const double* kj = kv.data() + j * m + off;
                for (std::size_t d = 0; d < dh; ++d) s += qi[d] * kj[d];
                s *= scale_f;
                p_row[j] = s;
                mx = std::max(mx, s);
            }
            double z = 0.0;
            for (std::size_t j = 0; j <= i; ++j) {
                const double e = std::exp(p_row[j] - mx);
                p_row[j] = e;
                z += e;
            }
            for (std::size_t j = 0; j <= i; ++j) p_row[j] /= z;
            double* orow = ov.data() + i * m + off;
            for (std::size_t j = 0; j <= i; ++j) {
                const double p = p_row[j];
                const double* vj = vv.data() + j * m + off;
                for (std::size_t d = 0; d < dh; ++d) orow[d] += p * vj[d];
            }
        }
    }
    ensure_finite(out, "causal_self_attention");
    maybe_record(out, [q = q, k = k, v = v, out, probs, t, m, dh, n_heads,
                       scale_f]() mutable {
        if (!out.has_grad()) return;
        auto go = out.grad_view();
        const bool need_q = q.requires_grad(), need_k = k.requires_grad(),
                   need_v = v.requires_grad();
        if (!(need_q || need_k || need_v)) return;
        auto qv = q.data();
        auto kv = k.data();
        auto vv = v.data();
        std::vector<double> ds_row(t);
        for (std::size_t h = 0; h < n_heads; ++h) {
            const std::size_t off = h * dh;
            const double* p_h = probs->data() + h * t * t;
            for (std::size_t i = 0; i < t; ++i) {
                const double* p_row = p_h + i * t;
                const double* gout = go.data() + i * m + off;
                // dP[j] = dO_i · V_j ; dS = P ∘ (dP − Σ_j dP[j]·P[j])
                double dot = 0.0;
                for (std::size_t j = 0; j <= i; ++j) {
                    double dp = 0.0;
                    const double* vj = vv.data() + j * m + off;
                    for (std::size_t d = 0; d < dh; ++d) dp += gout[d] * vj[d];
                    ds_row[j] = dp;
                    dot += dp * p_row[j];
                }
                for (std::size_t j = 0; j <= i; ++j)
                    ds_row[j] = p_row[j] * (ds_row[j] - dot) * scale_f;
                if (need_v) {
                    auto gv2 = v.grad();
                    for (std::size_t j = 0; j <= i; ++j) {
                        double* gvj = gv2.data() + j * m + off;
                        const double p = p_row[j];
                        for (std::size_t d = 0; d < dh; ++d) gvj[d] += p * gout[d];
                    }
                }
                if (need_q) {
                    auto gq = q.grad();
                    double* gqi = gq.data() + i * m + off;
                    for (std::size_t j = 0; j <= i; ++j) {
                        const double s = ds_row[j];
                        const double* kj = kv.data() + j * m + off;
                        for (std::size_t d = 0; d < dh; ++d) gqi[d] += s * kj[d];
                    }
                }
                if (need_k) {
                    auto gk = k.grad();
                    const double* qi = qv.data() + i * m + off;
                    for (std::size_t j = 0; j <= i; ++j) {
                        const double s = ds_row[j];
                        double* gkj = gk.data() + j * m + off;
                        for (std::size_t d = 0; d < dh; ++d) gkj[d] += s * qi[d];
                    }
                }
            }
        }
    });
    return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> targets) {
    if (logits.rank() != 2) throw DimensionError("cross_entropy expects 2-d logits");
    const std::size_t t = logits.dim(0), vsize = logits.dim(1);
    if (targets.size() != t)
        throw DimensionError("cross_entropy: got " + std::to_string(targets.size()) +
                             " targets for " + std::to_string(t) + " rows");
    for (int y : targets)
        if (y < 0 || static_cast<std::size_t>(y) >= vsize)
            throw IndexError("cross_entropy: target id " + std::to_string(y) +
                             " outside vocabulary of " + std::to_string(vsize));
    Tensor out = Tensor::zeros({1}, wants_grad(logits));
    auto lv = logits.data();
    double total = 0.0;
    for (std::size_t r = 0; r < t; ++r) {
        const double* row = lv.data() + r * vsize;
        double mx = row[0];
        for (std::size_t j = 1; j < vsize; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < vsize; ++j) z += std::exp(row[j] - mx);
        total += (mx + std::log(z)) - row[static_cast<std::size_t>(targets[r])];
    }
    out.data()[0] = total / static_cast<double>(t);
    ensure_finite(out, "softmax_cross_entropy");
    std::vector<int> tgt(targets.begin(), targets.end());
    maybe_record(out, [logits = logits, out, tgt = std::move(tgt), t, vsize]() mutable {
        if (!out.has_grad()) return;
        const double go = out.grad_view()[0] / static_cast<double>(t);
        if (!logits.requires_grad()) return;
        auto gl = logits.grad();
        auto lv = logits.data();
        for (std::size_t r = 0; r < t; ++r) {
            const double* row = lv.data() + r * vsize;
            double mx = row[0];
            for (std::size_t j = 1; j < vsize; ++j) mx = std::max(mx, row[j]);
            double z = 0.0;
            for (std::size_t j = 0; j < vsize; ++j) z += std::exp(row[j] - mx);
            for (std::size_t j = 0; j < vsize; ++j) {
                double p = std::exp(row[j] - mx) / z;
                if (j == static_cast<std::size_t>(tgt[r])) p -= 1.0;
                gl[r * vsize + j] += go * p;
            }
        }
    });
    return out;
}

}  // namespace hieradapt::numcore
