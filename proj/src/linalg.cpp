#include "hieradapt/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hieradapt/errors.hpp"

namespace hieradapt::linalg {

bool cholesky(const Mat& m, Mat& lower) {
    if (m.rows != m.cols) throw DimensionError("cholesky requires a square matrix");
    const std::size_t n = m.rows;
    lower = Mat(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double acc = m.at(i, j);
            for (std::size_t k = 0; k < j; ++k) acc -= lower.at(i, k) * lower.at(j, k);
            if (i == j) {
                if (!(acc > 0.0) || !std::isfinite(acc)) return false;
                lower.at(i, i) = std::sqrt(acc);
            } else {
                lower.at(i, j) = acc / lower.at(j, j);
            }
        }
    }
    return true;
}

std::vector<double> solve_lower(const Mat& lower, std::span<const double> b) {
    const std::size_t n = lower.rows;
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = b[i];
        for (std::size_t k = 0; k < i; ++k) acc -= lower.at(i, k) * y[k];
        y[i] = acc / lower.at(i, i);
    }
    return y;
}

std::vector<double> solve_lower_transposed(const Mat& lower, std::span<const double> b) {
    const std::size_t n = lower.rows;
    std::vector<double> x(n);
    for (std::size_t ii = n; ii-- > 0;) {
        double acc = b[ii];
        for (std::size_t k = ii + 1; k < n; ++k) acc -= lower.at(k, ii) * x[k];
        x[ii] = acc / lower.at(ii, ii);
    }
    return x;
}

double log_det_from_cholesky(const Mat& lower) {
    double acc = 0.0;
    for (std::size_t i = 0; i < lower.rows; ++i) acc += std::log(lower.at(i, i));
    return 2.0 * acc;
}

EigenSym jacobi_eigen_sym(const Mat& m, int max_sweeps) {
    if (m.rows != m.cols) throw DimensionError("jacobi requires a square matrix");
    const std::size_t n = m.rows;
    Mat a = m;
    Mat v(n, n);
    for (std::size_t i = 0; i < n; ++i) v.at(i, i) = 1.0;

    auto off_norm = [&]() {
        double s = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) s += a.at(p, q) * a.at(p, q);
        return s;
    };
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) scale = std::max(scale, std::abs(m.at(i, j)));
    const double stop = (scale * scale) * 1e-30 * static_cast<double>(n * n) + 1e-300;

    for (int sweep = 0; sweep < max_sweeps && off_norm() > stop; ++sweep) {
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a.at(p, q);
                if (apq == 0.0) continue;
                const double app = a.at(p, p), aqq = a.at(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t i = 0; i < n; ++i) {
                    const double aip = a.at(i, p), aiq = a.at(i, q);
                    a.at(i, p) = c * aip - s * aiq;
                    a.at(i, q) = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double api = a.at(p, i), aqi = a.at(q, i);
                    a.at(p, i) = c * api - s * aqi;
                    a.at(q, i) = s * api + c * aqi;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vip = v.at(i, p), viq = v.at(i, q);
                    v.at(i, p) = c * vip - s * viq;
                    v.at(i, q) = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a.at(x, x) > a.at(y, y); });
    EigenSym out;
    out.values.resize(n);
    out.vectors = Mat(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.values[j] = a.at(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) out.vectors.at(i, j) = v.at(i, order[j]);
    }
    return out;
}

}  // namespace hieradapt::linalg
