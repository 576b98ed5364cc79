#include <cmath>

#include "hieradapt/clustering.hpp"
#include "hieradapt/errors.hpp"

namespace hieradapt::clustering {

void EmbeddingMatrix::validate() const {
    if (rows.rows != row_domain.size())
        throw ValidationError("embedding matrix: label count does not match rows");
    for (double v : rows.a)
        if (!std::isfinite(v)) throw ValidationError("embedding matrix contains non-finite values");
}

std::map<std::string, linalg::Mat> EmbeddingMatrix::split_by_domain() const {
    validate();
    std::map<std::string, std::vector<std::size_t>> rows_of;
    for (std::size_t r = 0; r < row_domain.size(); ++r) rows_of[row_domain[r]].push_back(r);
    std::map<std::string, linalg::Mat> out;
    for (const auto& [domain, idx] : rows_of) {
        linalg::Mat m(idx.size(), rows.cols);
        for (std::size_t r = 0; r < idx.size(); ++r)
            std::copy(rows.row(idx[r]).begin(), rows.row(idx[r]).end(), m.row(r).begin());
        out.emplace(domain, std::move(m));
    }
    return out;
}

PcaModel pca_fit(const linalg::Mat& x, std::size_t p) {
    const std::size_t n = x.rows, m = x.cols;
    if (n < 2) throw DimensionError("pca_fit: need at least two rows");
    if (p < 1 || p > std::min(n, m))
        throw DimensionError("pca_fit: p must lie in [1, min(n, m)]");

    PcaModel model;
    model.mean.assign(m, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) model.mean[c] += x.at(r, c);
    for (double& v : model.mean) v /= static_cast<double>(n);

    linalg::Mat cov(m, m);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < m; ++i) {
            const double di = x.at(r, i) - model.mean[i];
            for (std::size_t j = i; j < m; ++j)
                cov.at(i, j) += di * (x.at(r, j) - model.mean[j]);
        }
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i; j < m; ++j) {
            cov.at(i, j) /= static_cast<double>(n - 1);
            cov.at(j, i) = cov.at(i, j);
        }

    linalg::EigenSym eig = linalg::jacobi_eigen_sym(cov);
    model.components = linalg::Mat(m, p);
    model.explained.assign(p, 0.0);
    for (std::size_t c = 0; c < p; ++c) {
        model.explained[c] = eig.values[c];
        // Fix the sign so the largest-magnitude entry is positive.
        std::size_t imax = 0;
        for (std::size_t i = 1; i < m; ++i)
            if (std::abs(eig.vectors.at(i, c)) > std::abs(eig.vectors.at(imax, c))) imax = i;
        const double flip = eig.vectors.at(imax, c) < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < m; ++i)
            model.components.at(i, c) = flip * eig.vectors.at(i, c);
    }
    return model;
}

linalg::Mat pca_transform(const PcaModel& model, const linalg::Mat& x) {
    const std::size_t m = model.mean.size(), p = model.components.cols;
    if (x.cols != m) throw DimensionError("pca_transform: input dim does not match model");
    linalg::Mat out(x.rows, p);
    for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t c = 0; c < p; ++c) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i)
                acc += (x.at(r, i) - model.mean[i]) * model.components.at(i, c);
            out.at(r, c) = acc;
        }
    return out;
}

}  // namespace hieradapt::clustering
