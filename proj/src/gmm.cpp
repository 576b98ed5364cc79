#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>

#include "hieradapt/clustering.hpp"
#include "hieradapt/errors.hpp"
#include "hieradapt/rng.hpp"

namespace hieradapt::clustering {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kCollapseWeight = 1e-8;
constexpr int kMaxReseeds = 5;

struct ComponentFactor {
    linalg::Mat lower;
    double log_det = 0.0;
};

double log_density(const GaussianComponent& g, const ComponentFactor& f,
                   std::span<const double> x) {
    const std::size_t p = g.mean.size();
    std::vector<double> diff(p);
    for (std::size_t i = 0; i < p; ++i) diff[i] = x[i] - g.mean[i];
    const std::vector<double> y = linalg::solve_lower(f.lower, diff);
    double mahal = 0.0;
    for (double v : y) mahal += v * v;
    return -0.5 * (static_cast<double>(p) * kLog2Pi + f.log_det + mahal);
}

linalg::Mat sample_covariance(const linalg::Mat& x, std::span<const double> mean) {
    const std::size_t n = x.rows, p = x.cols;
    linalg::Mat cov(p, p);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < p; ++i) {
            const double di = x.at(r, i) - mean[i];
            for (std::size_t j = i; j < p; ++j) cov.at(i, j) += di * (x.at(r, j) - mean[j]);
        }
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = i; j < p; ++j) {
            cov.at(i, j) /= static_cast<double>(n);
            cov.at(j, i) = cov.at(i, j);
        }
    return cov;
}

void add_ridge(linalg::Mat& cov, double rel) {
    const std::size_t p = cov.rows;
    double trace = 0.0;
    for (std::size_t i = 0; i < p; ++i) trace += cov.at(i, i);
    double eps = rel * trace / static_cast<double>(p);
    if (!(eps > 0.0) || !std::isfinite(eps)) eps = rel;
    for (std::size_t i = 0; i < p; ++i) cov.at(i, i) += eps;
}

// k-means++ style seeding: spread means by squared-distance sampling.
std::vector<std::vector<double>> seed_means(const linalg::Mat& x, int k, Rng& rng) {
    const std::size_t n = x.rows, p = x.cols;
    std::vector<std::vector<double>> means;
    auto row_vec = [&](std::size_t r) {
        return std::vector<double>(x.row(r).begin(), x.row(r).end());
    };
    means.push_back(row_vec(rng.uniform_index(n)));
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    while (means.size() < static_cast<std::size_t>(k)) {
        double total = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            double dist = 0.0;
            const auto& last = means.back();
            for (std::size_t i = 0; i < p; ++i) {
                const double d = x.at(r, i) - last[i];
                dist += d * d;
            }
            d2[r] = std::min(d2[r], dist);
            total += d2[r];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t r = 0; r < n; ++r) {
                acc += d2[r];
                if (acc >= target) {
                    pick = r;
                    break;
                }
            }
        } else {
            pick = rng.uniform_index(n);
        }
        means.push_back(row_vec(pick));
    }
    return means;
}

struct FitResult {
    GmmModel model;
    double final_ll = -std::numeric_limits<double>::infinity();
    bool ok = false;
};

FitResult fit_once(const linalg::Mat& x, int k, const GmmConfig& cfg, std::uint64_t seed) {
    const std::size_t n = x.rows, p = x.cols;
    Rng rng(seed);
    FitResult result;
    GmmModel& gmm = result.model;
    gmm.dim = p;
    gmm.components.resize(static_cast<std::size_t>(k));

    std::vector<double> global_mean(p, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < p; ++i) global_mean[i] += x.at(r, i);
    for (double& v : global_mean) v /= static_cast<double>(n);
    linalg::Mat global_cov = sample_covariance(x, global_mean);
    add_ridge(global_cov, cfg.reg);

    auto means = seed_means(x, k, rng);
    for (int j = 0; j < k; ++j) {
        auto& g = gmm.components[static_cast<std::size_t>(j)];
        g.weight = 1.0 / static_cast<double>(k);
        g.mean = means[static_cast<std::size_t>(j)];
        g.cov = global_cov;
    }

    std::vector<ComponentFactor> factors(static_cast<std::size_t>(k));
    std::vector<double> resp(n * static_cast<std::size_t>(k));
    std::vector<double> row_ll(n);
    double prev_ll = -std::numeric_limits<double>::infinity();
    int reseeds = 0;

    for (int iter = 0; iter < cfg.max_iter; ++iter) {
        for (int j = 0; j < k; ++j) {
            auto& g = gmm.components[static_cast<std::size_t>(j)];
            linalg::Mat cov = g.cov;
            bool pd = false;
            double boost = cfg.reg;
            for (int attempt = 0; attempt < 8; ++attempt) {
                if (linalg::cholesky(cov, factors[static_cast<std::size_t>(j)].lower)) {
                    pd = true;
                    break;
                }
                boost *= 10.0;
                cov = g.cov;
                add_ridge(cov, boost);
            }
            if (!pd) return result;
            g.cov = cov;
            factors[static_cast<std::size_t>(j)].log_det =
                linalg::log_det_from_cholesky(factors[static_cast<std::size_t>(j)].lower);
        }

        // E-step: per-row posteriors; fixed-order reduction keeps the
        // likelihood identical regardless of thread count.
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (n > 64)
#endif
        for (long long rr = 0; rr < static_cast<long long>(n); ++rr) {
            const auto r = static_cast<std::size_t>(rr);
            double mx = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < k; ++j) {
                const auto& g = gmm.components[static_cast<std::size_t>(j)];
                const double l = std::log(g.weight) +
                                 log_density(g, factors[static_cast<std::size_t>(j)], x.row(r));
                resp[r * static_cast<std::size_t>(k) + static_cast<std::size_t>(j)] = l;
                mx = std::max(mx, l);
            }
            double z = 0.0;
            for (int j = 0; j < k; ++j)
                z += std::exp(resp[r * static_cast<std::size_t>(k) + static_cast<std::size_t>(j)] - mx);
            row_ll[r] = mx + std::log(z);
            for (int j = 0; j < k; ++j) {
                auto& v = resp[r * static_cast<std::size_t>(k) + static_cast<std::size_t>(j)];
                v = std::exp(v - row_ll[r]);
            }
        }
        double ll = 0.0;
        for (std::size_t r = 0; r < n; ++r) ll += row_ll[r];
        ll /= static_cast<double>(n);
        gmm.log_likelihood_trace.push_back(ll);

        const bool converged = iter > 0 && ll - prev_ll < cfg.tol;
        prev_ll = ll;

        // M-step.
        bool reseeded = false;
        for (int j = 0; j < k; ++j) {
            auto& g = gmm.components[static_cast<std::size_t>(j)];
            double nj = 0.0;
            for (std::size_t r = 0; r < n; ++r)
                nj += resp[r * static_cast<std::size_t>(k) + static_cast<std::size_t>(j)];
            if (nj / static_cast<double>(n) < kCollapseWeight) {
                if (++reseeds > kMaxReseeds) return result;
                const std::size_t pick = rng.uniform_index(n);
                g.mean = std::vector<double>(x.row(pick).begin(), x.row(pick).end());
                g.cov = global_cov;
                g.weight = 1.0 / static_cast<double>(k);
                reseeded = true;
                continue;
            }
            g.weight = nj / static_cast<double>(n);
            std::vector<double> mu(p, 0.0);
            for (std::size_t r = 0; r < n; ++r) {
                const double w = resp[r * static_cast<std::size_t>(k) + static_cast<std::size_t>(j)];
                for (std::size_t i = 0; i < p; ++i) mu[i] += w * x.at(r, i);
            }
            for (double& v : mu) v /= nj;
            linalg::Mat cov(p, p);
            for (std::size_t r = 0; r < n; ++r) {
                const double w = resp[r * static_cast<std::size_t>(k) + static_cast<std::size_t>(j)];
                for (std::size_t i = 0; i < p; ++i) {
                    const double di = x.at(r, i) - mu[i];
                    for (std::size_t jj = i; jj < p; ++jj)
                        cov.at(i, jj) += w * di * (x.at(r, jj) - mu[jj]);
                }
            }
            for (std::size_t i = 0; i < p; ++i)
                for (std::size_t jj = i; jj < p; ++jj) {
                    cov.at(i, jj) /= nj;
                    cov.at(jj, i) = cov.at(i, jj);
                }
            add_ridge(cov, cfg.reg);
            g.mean = std::move(mu);
            g.cov = std::move(cov);
        }
        if (reseeded) {
            // The monotone trace restarts from the re-seeded parameters.
            gmm.log_likelihood_trace.clear();
            prev_ll = -std::numeric_limits<double>::infinity();
            continue;
        }
        // Renormalize weights exactly once per M-step.
        double wsum = 0.0;
        for (const auto& g : gmm.components) wsum += g.weight;
        for (auto& g : gmm.components) g.weight /= wsum;

        if (converged) break;
    }
    if (gmm.log_likelihood_trace.empty()) return result;
    result.final_ll = gmm.log_likelihood_trace.back();
    result.ok = true;
    return result;
}

}  // namespace

void GmmModel::validate() const {
    if (components.empty()) throw ValidationError("gmm has no components");
    double wsum = 0.0;
    for (const auto& g : components) {
        if (g.mean.size() != dim || g.cov.rows != dim || g.cov.cols != dim)
            throw ValidationError("gmm component dimensions are inconsistent");
        if (!(g.weight > 0.0 && g.weight <= 1.0))
            throw ValidationError("gmm component weight out of range");
        wsum += g.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-9) throw ValidationError("gmm weights do not sum to 1");
}

GmmModel gmm_fit(const linalg::Mat& x, int k, const GmmConfig& cfg) {
    if (k < 1) throw ValidationError("gmm_fit: k must be >= 1");
    if (x.rows < static_cast<std::size_t>(k))
        throw ValidationError("gmm_fit: need at least k samples");
    if (cfg.n_init < 1) throw ValidationError("gmm_fit: n_init must be >= 1");

    std::optional<FitResult> best;
    for (int restart = 0; restart < cfg.n_init; ++restart) {
        FitResult r = fit_once(x, k, cfg, Rng::derive(cfg.seed, static_cast<std::uint64_t>(restart)));
        if (!r.ok) continue;
        if (!best || r.final_ll > best->final_ll) best = std::move(r);
    }
    if (!best)
        throw ConvergenceError("gmm_fit: no restart converged after " +
                               std::to_string(cfg.n_init) + " attempts");
    best->model.validate();
    return std::move(best->model);
}

std::vector<double> responsibilities(const GmmModel& gmm, std::span<const double> x) {
    if (x.size() != gmm.dim) throw DimensionError("responsibilities: dimension mismatch");
    const std::size_t k = gmm.k();
    std::vector<double> logp(k);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
        const auto& g = gmm.components[j];
        ComponentFactor f;
        if (!linalg::cholesky(g.cov, f.lower))
            throw MatrixError("responsibilities: component covariance is not PD");
        f.log_det = linalg::log_det_from_cholesky(f.lower);
        logp[j] = std::log(g.weight) + log_density(g, f, x);
        mx = std::max(mx, logp[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        logp[j] = std::exp(logp[j] - mx);
        z += logp[j];
    }
    for (double& v : logp) v /= z;
    return logp;
}

AssignResult assign_and_prune(const GmmModel& gmm,
                              const std::map<std::string, linalg::Mat>& samples_by_domain) {
    if (samples_by_domain.empty()) throw DataError("assign_and_prune: no domains");
    const std::size_t k = gmm.k();
    AssignResult out;
    for (const auto& [domain, samples] : samples_by_domain) {
        if (samples.rows == 0) throw DataError("assign_and_prune: domain has no samples: " + domain);
        std::vector<int> counts(k, 0);
        for (std::size_t r = 0; r < samples.rows; ++r) {
            const auto resp = responsibilities(gmm, samples.row(r));
            std::size_t arg = 0;
            for (std::size_t j = 1; j < k; ++j)
                if (resp[j] > resp[arg]) arg = j;
            counts[arg] += 1;
        }
        std::size_t winner = 0;
        for (std::size_t j = 1; j < k; ++j)
            if (counts[j] > counts[winner]) winner = j;
        out.cluster_of_domain.emplace(domain, static_cast<int>(winner));
        out.domains.push_back(domain);
        out.confusion.push_back(std::move(counts));
    }
    std::set<int> kept;
    for (const auto& [_, cluster] : out.cluster_of_domain) kept.insert(cluster);
    out.retained.assign(kept.begin(), kept.end());
    return out;
}

}  // namespace hieradapt::clustering
