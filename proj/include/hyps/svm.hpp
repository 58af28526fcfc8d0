#pragma once
// SPDX-License-Identifier: Apache-2.0
//
// RBF-kernel C-SVM trained with sequential minimal optimization
// (Platt's working-set heuristics with an error cache). Features are
// z-score standardized inside svm_train using training-row statistics;
// the decision function standardizes its input with the stored moments.
//
//   f(x) = sum_i alpha_i y_i exp(-gamma ||x~ - x~_i||^2) + bias
//
// gamma <= 0 requests the 'auto' value 1 / n_features.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "hyps/errors.hpp"
#include "hyps/matrix.hpp"
#include "hyps/rng.hpp"

namespace hyps {

struct SvmModel {
    Matrix support_x;              // standardized support rows
    std::vector<double> alpha;     // alpha_i > 0
    std::vector<int> label;        // y_i in {-1, +1}
    double bias = 0.0;
    double gamma = 0.0;
    double c = 1.0;
    std::vector<double> feat_mean, feat_std;
};

namespace detail {

inline double rbf(const double* a, const double* b, std::size_t f, double gamma) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < f; ++i) {
        const double d = a[i] - b[i];
        d2 += d * d;
    }
    return std::exp(-gamma * d2);
}

struct SmoSolver {
    const Matrix& x;  // standardized rows
    const std::vector<int>& y;
    double c, gamma, tol;
    std::vector<double> alpha, err;
    double bias = 0.0;
    std::vector<double> kernel;  // dense n x n cache
    std::size_t n;
    Rng rng;

    SmoSolver(const Matrix& xs, const std::vector<int>& ys, double cc, double g, double t,
              std::uint64_t seed)
        : x(xs), y(ys), c(cc), gamma(g), tol(t), n(xs.rows()), rng(seed) {
        alpha.assign(n, 0.0);
        err.resize(n);
        for (std::size_t i = 0; i < n; ++i) err[i] = -static_cast<double>(y[i]);
        kernel.resize(n * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j <= i; ++j) {
                const double k = rbf(x.row_ptr(i), x.row_ptr(j), x.cols(), gamma);
                kernel[i * n + j] = k;
                kernel[j * n + i] = k;
            }
    }

    double k(std::size_t i, std::size_t j) const { return kernel[i * n + j]; }

    bool take_step(std::size_t i1, std::size_t i2) {
        if (i1 == i2) return false;
        const double a1 = alpha[i1], a2 = alpha[i2];
        const int y1 = y[i1], y2 = y[i2];
        const double e1 = err[i1], e2 = err[i2];
        const double s = static_cast<double>(y1 * y2);
        double lo, hi;
        if (y1 != y2) {
            lo = std::max(0.0, a2 - a1);
            hi = std::min(c, c + a2 - a1);
        } else {
            lo = std::max(0.0, a1 + a2 - c);
            hi = std::min(c, a1 + a2);
        }
        if (lo >= hi) return false;
        const double eta = k(i1, i1) + k(i2, i2) - 2.0 * k(i1, i2);
        // The RBF kernel is strictly positive definite, so eta <= 0 only
        // for duplicated rows; another working pair will make progress.
        if (eta <= 0.0) return false;
        double a2new = a2 + static_cast<double>(y2) * (e1 - e2) / eta;
        a2new = std::min(std::max(a2new, lo), hi);
        if (std::abs(a2new - a2) < 1e-12 * (a2new + a2 + 1e-12)) return false;
        const double a1new = a1 + s * (a2 - a2new);

        const double d1 = static_cast<double>(y1) * (a1new - a1);
        const double d2 = static_cast<double>(y2) * (a2new - a2);
        const double b1 = bias - e1 - d1 * k(i1, i1) - d2 * k(i1, i2);
        const double b2 = bias - e2 - d1 * k(i1, i2) - d2 * k(i2, i2);
        double bnew;
        if (a1new > 0.0 && a1new < c) bnew = b1;
        else if (a2new > 0.0 && a2new < c) bnew = b2;
        else bnew = 0.5 * (b1 + b2);

        const double db = bnew - bias;
        for (std::size_t i = 0; i < n; ++i)
            err[i] += d1 * k(i1, i) + d2 * k(i2, i) + db;
        alpha[i1] = a1new;
        alpha[i2] = a2new;
        bias = bnew;
        return true;
    }

    bool examine(std::size_t i2) {
        const int y2 = y[i2];
        const double a2 = alpha[i2];
        const double r2 = err[i2] * static_cast<double>(y2);
        if (!((r2 < -tol && a2 < c) || (r2 > tol && a2 > 0.0))) return false;

        // 1) maximize |e1 - e2| over non-bound points
        std::size_t best = n;
        double best_gap = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (alpha[i] <= 0.0 || alpha[i] >= c) continue;
            const double gap = std::abs(err[i] - err[i2]);
            if (gap > best_gap) {
                best_gap = gap;
                best = i;
            }
        }
        if (best < n && take_step(best, i2)) return true;

        // 2) all non-bound points from a random start
        const std::size_t start1 = rng.below(n);
        for (std::size_t off = 0; off < n; ++off) {
            const std::size_t i = (start1 + off) % n;
            if (alpha[i] <= 0.0 || alpha[i] >= c) continue;
            if (take_step(i, i2)) return true;
        }
        // 3) everything from a random start
        const std::size_t start2 = rng.below(n);
        for (std::size_t off = 0; off < n; ++off) {
            const std::size_t i = (start2 + off) % n;
            if (take_step(i, i2)) return true;
        }
        return false;
    }

    void solve() {
        bool examine_all = true;
        std::size_t changed = 0;
        std::size_t sweeps = 0;
        const std::size_t max_sweeps = 200 * std::max<std::size_t>(n, 100);
        while (changed > 0 || examine_all) {
            if (++sweeps > max_sweeps)
                throw NumericError("svm_train: SMO failed to reach KKT tolerance");
            changed = 0;
            if (examine_all) {
                for (std::size_t i = 0; i < n; ++i) changed += examine(i);
            } else {
                for (std::size_t i = 0; i < n; ++i)
                    if (alpha[i] > 0.0 && alpha[i] < c) changed += examine(i);
            }
            if (examine_all) examine_all = false;
            else if (changed == 0) examine_all = true;
        }
    }
};

} // namespace detail

inline SvmModel svm_train(const Matrix& x, const std::vector<int>& y, double c = 1.0,
                          double gamma = 0.0, std::uint64_t seed = 0, double kkt_tol = 1e-3) {
    const std::size_t n = x.rows(), f = x.cols();
    if (n != y.size()) throw ShapeError("svm_train: X rows and label count differ");
    if (n < 2) throw DataError("svm_train: need at least 2 training rows");
    bool has_pos = false, has_neg = false;
    for (int v : y) {
        if (v == 1) has_pos = true;
        else if (v == -1) has_neg = true;
        else throw DataError("svm_train: labels must be +1 or -1");
    }
    if (!has_pos || !has_neg) throw DataError("svm_train: single-class input");
    if (!(c > 0.0)) throw ConfigError("svm_train: C must be positive");

    SvmModel model;
    model.c = c;
    model.gamma = gamma > 0.0 ? gamma : 1.0 / static_cast<double>(f);
    model.feat_mean.assign(f, 0.0);
    model.feat_std.assign(f, 0.0);
    for (std::size_t j = 0; j < f; ++j) {
        double mu = 0.0;
        for (std::size_t i = 0; i < n; ++i) mu += x(i, j);
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = x(i, j) - mu;
            var += d * d;
        }
        var /= static_cast<double>(n);
        model.feat_mean[j] = mu;
        model.feat_std[j] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    Matrix xs(n, f);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < f; ++j)
            xs(i, j) = (x(i, j) - model.feat_mean[j]) / model.feat_std[j];

    detail::SmoSolver solver(xs, y, c, model.gamma, kkt_tol, seed == 0 ? 0x5eed : seed);
    solver.solve();

    std::size_t sv = 0;
    for (std::size_t i = 0; i < n; ++i) sv += solver.alpha[i] > 0.0;
    model.support_x = Matrix(sv, f);
    model.alpha.reserve(sv);
    model.label.reserve(sv);
    std::size_t r = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (solver.alpha[i] <= 0.0) continue;
        for (std::size_t j = 0; j < f; ++j) model.support_x(r, j) = xs(i, j);
        model.alpha.push_back(solver.alpha[i]);
        model.label.push_back(y[i]);
        ++r;
    }
    model.bias = solver.bias;
    return model;
}

inline double svm_decision(const SvmModel& m, const std::vector<double>& x_raw) {
    const std::size_t f = m.feat_mean.size();
    if (x_raw.size() != f)
        throw ShapeError("svm_decision: expected " + std::to_string(f) + " features, got " +
                         std::to_string(x_raw.size()));
    std::vector<double> xs(f);
    for (std::size_t j = 0; j < f; ++j) xs[j] = (x_raw[j] - m.feat_mean[j]) / m.feat_std[j];
    double score = m.bias;
    for (std::size_t i = 0; i < m.support_x.rows(); ++i)
        score += m.alpha[i] * static_cast<double>(m.label[i]) *
                 detail::rbf(xs.data(), m.support_x.row_ptr(i), f, m.gamma);
    return score;
}

} // namespace hyps
