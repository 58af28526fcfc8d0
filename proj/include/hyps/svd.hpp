#pragma once
// SPDX-License-Identifier: Apache-2.0
//
// Thin SVD by one-sided Jacobi rotations. Small dense matrices only,
// which is all this library needs; accuracy is favored over speed.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "hyps/errors.hpp"
#include "hyps/matrix.hpp"

namespace hyps {

// W = U * diag(sigma) * V^T with k = min(m, n).
// U is m x k and V is n x k, both with orthonormal columns; sigma is
// descending and non-negative. Column signs are normalized so the
// largest-magnitude entry of each U column is non-negative.
struct SvdResult {
    Matrix u;
    std::vector<double> sigma;
    Matrix v;
};

struct SvdOptions {
    double tol = 1e-12;    // relative off-diagonal threshold per column pair
    int max_sweeps = 64;
};

namespace detail {

// One-sided Jacobi on a (m x n, m >= n). Columns of a converge to
// u_j * sigma_j; v accumulates the right rotations.
inline SvdResult jacobi_svd_tall(Matrix a, const SvdOptions& opt) {
    const std::size_t m = a.rows(), n = a.cols();
    Matrix v = Matrix::identity(n);

    double worst = 0.0;
    bool converged = false;
    for (int sweep = 0; sweep < opt.max_sweeps && !converged; ++sweep) {
        converged = true;
        worst = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    const double x = a(i, p), y = a(i, q);
                    app += x * x;
                    aqq += y * y;
                    apq += x * y;
                }
                const double denom = std::sqrt(app * aqq);
                if (denom == 0.0) continue;
                const double rel = std::fabs(apq) / denom;
                worst = std::max(worst, rel);
                if (rel <= opt.tol) continue;
                converged = false;

                const double zeta = (aqq - app) / (2.0 * apq);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double x = a(i, p), y = a(i, q);
                    a(i, p) = c * x - s * y;
                    a(i, q) = s * x + c * y;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double x = v(i, p), y = v(i, q);
                    v(i, p) = c * x - s * y;
                    v(i, q) = s * x + c * y;
                }
            }
        }
    }
    if (!converged)
        throw NumericError("svd: no convergence after " + std::to_string(opt.max_sweeps) +
                           " sweeps, residual " + std::to_string(worst));

    std::vector<double> sigma(n);
    Matrix u(m, n);
    for (std::size_t j = 0; j < n; ++j) {
        double norm = 0.0;
        for (std::size_t i = 0; i < m; ++i) norm += a(i, j) * a(i, j);
        sigma[j] = std::sqrt(norm);
    }

    // Descending order of singular values.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return sigma[i] > sigma[j]; });

    Matrix vs(n, n);
    std::vector<double> ss(n);
    const double sigma_max = sigma.empty() ? 0.0 : *std::max_element(sigma.begin(), sigma.end());
    const double tiny = std::max(1.0, sigma_max) * 1e-280;
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        ss[j] = sigma[src];
        for (std::size_t i = 0; i < n; ++i) vs(i, j) = v(i, src);
        if (ss[j] > tiny) {
            for (std::size_t i = 0; i < m; ++i) u(i, j) = a(i, src) / ss[j];
        }
    }

    // Vanished columns get an orthonormal completion so U^T U = I still holds.
    for (std::size_t j = 0; j < n; ++j) {
        if (ss[j] > tiny) continue;
        for (std::size_t basis = 0; basis < m; ++basis) {
            for (std::size_t i = 0; i < m; ++i) u(i, j) = (i == basis) ? 1.0 : 0.0;
            for (std::size_t prev = 0; prev < n; ++prev) {
                if (prev == j || (ss[prev] <= tiny && prev > j)) continue;
                double dot = 0.0;
                for (std::size_t i = 0; i < m; ++i) dot += u(i, prev) * u(i, j);
                for (std::size_t i = 0; i < m; ++i) u(i, j) -= dot * u(i, prev);
            }
            double norm = 0.0;
            for (std::size_t i = 0; i < m; ++i) norm += u(i, j) * u(i, j);
            if (norm > 1e-8) {
                norm = std::sqrt(norm);
                for (std::size_t i = 0; i < m; ++i) u(i, j) /= norm;
                break;
            }
        }
        ss[j] = 0.0;
    }

    // Deterministic sign: largest-magnitude entry of each U column non-negative.
    for (std::size_t j = 0; j < n; ++j) {
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double mag = std::fabs(u(i, j));
            if (mag > best) {
                best = mag;
                arg = i;
            }
        }
        if (u(arg, j) < 0.0) {
            for (std::size_t i = 0; i < m; ++i) u(i, j) = -u(i, j);
            for (std::size_t i = 0; i < n; ++i) vs(i, j) = -vs(i, j);
        }
    }

    return SvdResult{std::move(u), std::move(ss), std::move(vs)};
}

} // namespace detail

inline SvdResult svd(const Matrix& w, const SvdOptions& opt = {}) {
    if (w.empty())
        throw ShapeError("svd: empty matrix");
    if (!w.all_finite())
        throw NumericError("svd: input contains non-finite entries");
    if (w.rows() >= w.cols())
        return detail::jacobi_svd_tall(w, opt);
    SvdResult r = detail::jacobi_svd_tall(transpose(w), opt);
    std::swap(r.u, r.v);
    return r;
}

// U * diag(sigma) * V^T.
inline Matrix svd_reconstruct(const SvdResult& r) {
    Matrix us = r.u;
    for (std::size_t i = 0; i < us.rows(); ++i)
        for (std::size_t j = 0; j < us.cols(); ++j) us(i, j) *= r.sigma[j];
    return matmul(us, transpose(r.v));
}

} // namespace hyps
