#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace hieradapt::linalg {

// Minimal dense row-major matrix for the clustering math. Gradient-free.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
    std::span<const double> row(std::size_t r) const { return {a.data() + r * cols, cols}; }
    std::span<double> row(std::size_t r) { return {a.data() + r * cols, cols}; }
};

// Lower Cholesky factor of a symmetric positive-definite matrix.
// Returns false when the matrix is not PD.
bool cholesky(const Mat& m, Mat& lower);

// Solves L y = b / L^T x = b for a lower-triangular L.
std::vector<double> solve_lower(const Mat& lower, std::span<const double> b);
std::vector<double> solve_lower_transposed(const Mat& lower, std::span<const double> b);

// ln det(A) where lower is the Cholesky factor of A.
double log_det_from_cholesky(const Mat& lower);

struct EigenSym {
    std::vector<double> values;  // descending
    Mat vectors;                 // columns match values
};

// Cyclic Jacobi rotations; deterministic, no external dependencies.
EigenSym jacobi_eigen_sym(const Mat& m, int max_sweeps = 64);

}  // namespace hieradapt::linalg
