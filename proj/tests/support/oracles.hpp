#pragma once

// Independent reference implementations used only by tests. Each takes a
// different algorithmic route than the library so agreement is meaningful.

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "hieradapt/clustering.hpp"
#include "hieradapt/linalg.hpp"

namespace oracles {

using LMat = std::vector<std::vector<long double>>;

inline LMat to_lmat(const hieradapt::linalg::Mat& m) {
    LMat out(m.rows, std::vector<long double>(m.cols));
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) out[i][j] = m.at(i, j);
    return out;
}

// Gauss-Jordan inverse with partial pivoting, extended precision.
inline LMat invert(LMat a) {
    const std::size_t n = a.size();
    LMat inv(n, std::vector<long double>(n, 0.0L));
    for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0L;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        std::swap(a[col], a[pivot]);
        std::swap(inv[col], inv[pivot]);
        const long double d = a[col][col];
        if (d == 0.0L) throw std::runtime_error("oracle invert: singular matrix");
        for (std::size_t j = 0; j < n; ++j) {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const long double f = a[r][col];
            for (std::size_t j = 0; j < n; ++j) {
                a[r][j] -= f * a[col][j];
                inv[r][j] -= f * inv[col][j];
            }
        }
    }
    return inv;
}

// log(det) via LU with partial pivoting (PD input, so det > 0).
inline long double log_det(LMat a) {
    const std::size_t n = a.size();
    long double acc = 0.0L;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        std::swap(a[col], a[pivot]);
        acc += std::log(std::abs(a[col][col]));
        for (std::size_t r = col + 1; r < n; ++r) {
            const long double f = a[r][col] / a[col][col];
            for (std::size_t j = col; j < n; ++j) a[r][j] -= f * a[col][j];
        }
    }
    return acc;
}

// Direct evaluation of the multivariate-normal divergence formula.
inline double kl_gauss_reference(const hieradapt::clustering::GaussianComponent& g0,
                                 const hieradapt::clustering::GaussianComponent& g1) {
    const std::size_t n = g0.mean.size();
    const LMat s0 = to_lmat(g0.cov);
    const LMat s1 = to_lmat(g1.cov);
    const LMat s1_inv = invert(s1);
    long double trace = 0.0L;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k) trace += s1_inv[i][k] * s0[k][i];
    long double mahal = 0.0L;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            mahal += (g1.mean[i] - g0.mean[i]) * s1_inv[i][j] * (g1.mean[j] - g0.mean[j]);
    const long double ld = log_det(s1) - log_det(s0);
    return static_cast<double>(0.5L * (trace + ld + mahal - static_cast<long double>(n)));
}

// Direct density-ratio posterior, no log-space tricks.
inline std::vector<double> responsibilities_reference(
    const hieradapt::clustering::GmmModel& gmm, std::span<const double> x) {
    const std::size_t k = gmm.k(), p = gmm.dim;
    std::vector<long double> dens(k);
    long double total = 0.0L;
    for (std::size_t j = 0; j < k; ++j) {
        const auto& g = gmm.components[j];
        const LMat inv = invert(to_lmat(g.cov));
        long double mahal = 0.0L;
        for (std::size_t a = 0; a < p; ++a)
            for (std::size_t b = 0; b < p; ++b)
                mahal += (x[a] - g.mean[a]) * inv[a][b] * (x[b] - g.mean[b]);
        const long double norm =
            std::exp(-0.5L * (log_det(to_lmat(g.cov)) +
                              static_cast<long double>(p) * 1.837877066409345483560659L));
        dens[j] = g.weight * norm * std::exp(-0.5L * mahal);
        total += dens[j];
    }
    std::vector<double> out(k);
    for (std::size_t j = 0; j < k; ++j) out[j] = static_cast<double>(dens[j] / total);
    return out;
}

// Power iteration with deflation; eigenvalues of a small PD matrix.
inline std::vector<double> top_eigenvalues(const hieradapt::linalg::Mat& m, std::size_t count) {
    const std::size_t n = m.rows;
    LMat a = to_lmat(m);
    std::vector<double> values;
    for (std::size_t e = 0; e < count; ++e) {
        std::vector<long double> v(n, 1.0L / std::sqrt(static_cast<long double>(n)));
        long double lambda = 0.0L;
        for (int iter = 0; iter < 20000; ++iter) {
            std::vector<long double> w(n, 0.0L);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) w[i] += a[i][j] * v[j];
            long double norm = 0.0L;
            for (long double x : w) norm += x * x;
            norm = std::sqrt(norm);
            if (norm == 0.0L) break;
            for (std::size_t i = 0; i < n; ++i) w[i] /= norm;
            long double next = 0.0L;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) next += w[i] * a[i][j] * w[j];
            v = std::move(w);
            if (std::abs(next - lambda) < 1e-16L * std::max<long double>(1.0L, std::abs(next)))
                { lambda = next; break; }
            lambda = next;
        }
        values.push_back(static_cast<double>(lambda));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) a[i][j] -= lambda * v[i] * v[j];
    }
    return values;
}

// Average-linkage reference that recomputes every cluster distance as the
// mean over member pairs of the original matrix.
inline std::vector<hieradapt::domtree::LinkageStep> upgma_reference(
    const hieradapt::linalg::Mat& d0) {
    const std::size_t k = d0.rows;
    std::vector<std::vector<int>> members;
    std::vector<int> ids;
    for (std::size_t i = 0; i < k; ++i) {
        members.push_back({static_cast<int>(i)});
        ids.push_back(static_cast<int>(i));
    }
    auto cluster_dist = [&](const std::vector<int>& a, const std::vector<int>& b) {
        long double acc = 0.0L;
        for (int x : a)
            for (int y : b)
                acc += d0.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
        return static_cast<double>(acc / static_cast<long double>(a.size() * b.size()));
    };
    std::vector<hieradapt::domtree::LinkageStep> steps;
    int next_id = static_cast<int>(k);
    auto pair_ids = [&](std::size_t i, std::size_t j) {
        return std::pair<int, int>(std::min(ids[i], ids[j]), std::max(ids[i], ids[j]));
    };
    while (ids.size() > 1) {
        std::size_t bi = 0, bj = 1;
        double best = cluster_dist(members[0], members[1]);
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (std::size_t j = i + 1; j < ids.size(); ++j) {
                const double dist = cluster_dist(members[i], members[j]);
                if (dist < best - 1e-15 ||
                    (std::abs(dist - best) <= 1e-15 && pair_ids(i, j) < pair_ids(bi, bj))) {
                    best = dist;
                    bi = i;
                    bj = j;
                }
            }
        hieradapt::domtree::LinkageStep step;
        step.left = pair_ids(bi, bj).first;
        step.right = pair_ids(bi, bj).second;
        step.new_id = next_id++;
        step.height = best;
        step.size = static_cast<int>(members[bi].size() + members[bj].size());
        steps.push_back(step);
        std::vector<int> merged = members[bi];
        merged.insert(merged.end(), members[bj].begin(), members[bj].end());
        members.erase(members.begin() + static_cast<std::ptrdiff_t>(bj));
        ids.erase(ids.begin() + static_cast<std::ptrdiff_t>(bj));
        members[bi] = std::move(merged);
        ids[bi] = step.new_id;
    }
    return steps;
}

}  // namespace oracles
