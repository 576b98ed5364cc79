#include <cmath>
#include <limits>

#include "hieradapt/clustering.hpp"
#include "hieradapt/errors.hpp"

namespace hieradapt::clustering {

double kl_gauss(const GaussianComponent& g0, const GaussianComponent& g1) {
    const std::size_t p = g0.mean.size();
    if (g1.mean.size() != p || g0.cov.rows != p || g1.cov.rows != p)
        throw DimensionError("kl_gauss: distributions have different dimensions");

    linalg::Mat l1;
    if (!linalg::cholesky(g1.cov, l1))
        throw MatrixError("kl_gauss: second covariance is not positive definite");
    linalg::Mat l0;
    if (!linalg::cholesky(g0.cov, l0))
        throw MatrixError("kl_gauss: first covariance is not positive definite");

    const double log_det1 = linalg::log_det_from_cholesky(l1);
    const double log_det0 = linalg::log_det_from_cholesky(l0);

    // tr(S1^-1 S0) column by column through the factor, no explicit inverse.
    double trace = 0.0;
    std::vector<double> col(p);
    for (std::size_t c = 0; c < p; ++c) {
        for (std::size_t i = 0; i < p; ++i) col[i] = g0.cov.at(i, c);
        const auto y = linalg::solve_lower(l1, col);
        const auto z = linalg::solve_lower_transposed(l1, y);
        trace += z[c];
    }

    std::vector<double> diff(p);
    for (std::size_t i = 0; i < p; ++i) diff[i] = g1.mean[i] - g0.mean[i];
    const auto w = linalg::solve_lower(l1, diff);
    double mahal = 0.0;
    for (double v : w) mahal += v * v;

    return 0.5 * (trace + (log_det1 - log_det0)) +
           0.5 * (mahal - static_cast<double>(p));
}

double sym_kl(const GaussianComponent& g0, const GaussianComponent& g1) {
    return 0.5 * (kl_gauss(g0, g1) + kl_gauss(g1, g0));
}

void DistanceMatrix::validate() const {
    if (d.rows != d.cols) throw ValidationError("distance matrix must be square");
    for (std::size_t i = 0; i < d.rows; ++i) {
        if (d.at(i, i) != 0.0) throw ValidationError("distance matrix diagonal must be zero");
        for (std::size_t j = 0; j < d.cols; ++j) {
            if (d.at(i, j) != d.at(j, i))
                throw ValidationError("distance matrix must be exactly symmetric");
            if (d.at(i, j) < 0.0 || !std::isfinite(d.at(i, j)))
                throw ValidationError("distance matrix entries must be finite and non-negative");
        }
    }
}

DistanceMatrix sym_kl_distances(std::span<const GaussianComponent> components) {
    const std::size_t k = components.size();
    DistanceMatrix out;
    out.d = linalg::Mat(k, k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j) {
            const double dist = sym_kl(components[i], components[j]);
            // Clamp the tiny negative values numerical noise can produce.
            const double clamped = dist < 0.0 ? 0.0 : dist;
            out.d.at(i, j) = clamped;
            out.d.at(j, i) = clamped;
        }
    out.validate();
    return out;
}

std::vector<domtree::LinkageStep> agglomerate(const DistanceMatrix& dist) {
    dist.validate();
    const std::size_t k = dist.d.rows;
    if (k < 2) throw ValidationError("agglomerate: need at least two clusters");

    // Distances between live clusters, indexed by cluster id (merges create
    // ids k, k+1, ...). Average linkage weights by cluster size.
    const std::size_t total = 2 * k - 1;
    linalg::Mat d(total, total);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) d.at(i, j) = dist.d.at(i, j);
    std::vector<int> size(total, 0);
    std::vector<bool> live(total, false);
    for (std::size_t i = 0; i < k; ++i) {
        size[i] = 1;
        live[i] = true;
    }

    std::vector<domtree::LinkageStep> steps;
    steps.reserve(k - 1);
    for (std::size_t merge = 0; merge < k - 1; ++merge) {
        std::size_t best_i = 0, best_j = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < total; ++i) {
            if (!live[i]) continue;
            for (std::size_t j = i + 1; j < total; ++j) {
                if (!live[j]) continue;
                if (d.at(i, j) < best) {  // strict < keeps the smallest (i, j) on ties
                    best = d.at(i, j);
                    best_i = i;
                    best_j = j;
                }
            }
        }
        const std::size_t new_id = k + merge;
        domtree::LinkageStep step;
        step.left = static_cast<int>(best_i);
        step.right = static_cast<int>(best_j);
        step.new_id = static_cast<int>(new_id);
        step.height = best;
        step.size = size[best_i] + size[best_j];
        steps.push_back(step);

        const double si = static_cast<double>(size[best_i]);
        const double sj = static_cast<double>(size[best_j]);
        for (std::size_t o = 0; o < total; ++o) {
            if (!live[o] || o == best_i || o == best_j) continue;
            const double nd = (si * d.at(best_i, o) + sj * d.at(best_j, o)) / (si + sj);
            d.at(new_id, o) = nd;
            d.at(o, new_id) = nd;
        }
        live[best_i] = false;
        live[best_j] = false;
        live[new_id] = true;
        size[new_id] = step.size;
    }
    return steps;
}

}  // namespace hieradapt::clustering
