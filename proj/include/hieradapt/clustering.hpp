#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hieradapt/domtree.hpp"
#include "hieradapt/linalg.hpp"

namespace hieradapt::clustering {

// Sequence embeddings with one domain label per row.
struct EmbeddingMatrix {
    linalg::Mat rows;
    std::vector<std::string> row_domain;

    void validate() const;
    std::map<std::string, linalg::Mat> split_by_domain() const;
};

struct PcaModel {
    std::vector<double> mean;        // input dim
    linalg::Mat components;          // input dim x p, orthonormal columns
    std::vector<double> explained;   // eigenvalues, non-increasing
};

// Top-p principal directions of the mean-centered data, via Jacobi
// eigendecomposition of the covariance. Column signs are normalized so the
// largest-magnitude entry is positive.
PcaModel pca_fit(const linalg::Mat& x, std::size_t p);
linalg::Mat pca_transform(const PcaModel& model, const linalg::Mat& x);

struct GaussianComponent {
    double weight = 0.0;
    std::vector<double> mean;
    linalg::Mat cov;
};

struct GmmConfig {
    int max_iter = 200;
    double tol = 1e-7;       // mean log-likelihood gain that counts as converged
    double reg = 1e-6;       // covariance ridge, scaled by trace/p each M-step
    std::uint64_t seed = 0;
    int n_init = 5;
};

struct GmmModel {
    std::size_t dim = 0;
    std::vector<GaussianComponent> components;
    std::vector<double> log_likelihood_trace;  // mean per sample, winning restart

    std::size_t k() const { return components.size(); }
    void validate() const;
};

// Full-covariance EM, k-means++ style seeding, best of n_init restarts by
// final log-likelihood. Collapsed components are re-seeded; a restart that
// keeps collapsing is abandoned, and if all restarts fail the fit throws.
GmmModel gmm_fit(const linalg::Mat& x, int k, const GmmConfig& cfg);

// Posterior over components, computed in log space.
std::vector<double> responsibilities(const GmmModel& gmm, std::span<const double> x);

struct AssignResult {
    std::map<std::string, int> cluster_of_domain;
    std::vector<int> retained;                // sorted, clusters owning a domain
    std::vector<std::string> domains;         // confusion-matrix row order
    std::vector<std::vector<int>> confusion;  // argmax counts: domain x component
};

// A domain's cluster is the component winning the most of its samples;
// components that win no domain are pruned. Ties break to the lowest index.
AssignResult assign_and_prune(const GmmModel& gmm,
                              const std::map<std::string, linalg::Mat>& samples_by_domain);

// KL divergence between multivariate normals, via Cholesky of g1's
// covariance (log-det from the factor diagonal, solves instead of inverses).
double kl_gauss(const GaussianComponent& g0, const GaussianComponent& g1);

// Symmetrized divergence: both directions computed, then averaged.
double sym_kl(const GaussianComponent& g0, const GaussianComponent& g1);

struct DistanceMatrix {
    linalg::Mat d;
    void validate() const;  // symmetric, non-negative, zero diagonal
};

DistanceMatrix sym_kl_distances(std::span<const GaussianComponent> components);

// Size-weighted average-linkage merges; ties break to the smallest (i, j).
std::vector<domtree::LinkageStep> agglomerate(const DistanceMatrix& dist);

void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& emb);
EmbeddingMatrix load_embeddings(const std::filesystem::path& path);
void save_pca(const std::filesystem::path& path, const PcaModel& model);
PcaModel load_pca(const std::filesystem::path& path);
void save_gmm(const std::filesystem::path& path, const GmmModel& gmm);
GmmModel load_gmm(const std::filesystem::path& path);
std::string linkage_to_json(std::span<const domtree::LinkageStep> steps);
std::vector<domtree::LinkageStep> linkage_from_json(const std::string& text);
std::string confusion_to_csv(const AssignResult& assign);

}  // namespace hieradapt::clustering
