#pragma once
// SPDX-License-Identifier: Apache-2.0
//
// Tape-based reverse-mode autodiff over Matrix values. Build a graph by
// calling the op methods, then backward(loss) with a 1x1 loss node;
// gradients of every node reachable from the loss are accumulated in
// node-creation order, so repeated runs are bit-identical.

#include <cmath>
#include <cstddef>
#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hyps/errors.hpp"
#include "hyps/matrix.hpp"

namespace hyps {

class Tape {
public:
    int leaf(Matrix v) {
        nodes_.push_back(Node{std::move(v), {}, {}});
        return static_cast<int>(nodes_.size()) - 1;
    }

    const Matrix& value(int id) const { return nodes_[check(id)].value; }

    // Valid after backward(); zero-shaped for nodes the loss never saw.
    const Matrix& grad(int id) const {
        check(id);
        if (!has_grad(id))
            throw UsageError("grad: node " + std::to_string(id) + " has no gradient");
        return grads_[id];
    }
    bool has_grad(int id) const {
        check(id);
        return static_cast<std::size_t>(id) < grads_.size() && grads_[id].size() > 0;
    }

    std::size_t size() const { return nodes_.size(); }

    int matmul(int a, int b) {
        Matrix v = hyps::matmul(value(a), value(b));
        return push(std::move(v), {a, b}, [](Tape& t, int self, const std::vector<int>& p) {
            const Matrix& d = t.grads_[self];
            t.accumulate(p[0], hyps::matmul(d, hyps::transpose(t.value(p[1]))));
            t.accumulate(p[1], hyps::matmul(hyps::transpose(t.value(p[0])), d));
        });
    }

    int add(int a, int b) {
        Matrix v = value(a) + value(b);
        return push(std::move(v), {a, b}, [](Tape& t, int self, const std::vector<int>& p) {
            const Matrix& d = t.grads_[self];
            t.accumulate(p[0], d);
            t.accumulate(p[1], d);
        });
    }

    int sub(int a, int b) {
        Matrix v = value(a) - value(b);
        return push(std::move(v), {a, b}, [](Tape& t, int self, const std::vector<int>& p) {
            const Matrix& d = t.grads_[self];
            t.accumulate(p[0], d);
            Matrix neg = d;
            for (std::size_t i = 0; i < neg.size(); ++i) neg.data()[i] = -neg.data()[i];
            t.accumulate(p[1], std::move(neg));
        });
    }

    int scale(int a, double s) {
        Matrix v = s * value(a);
        return push(std::move(v), {a}, [s](Tape& t, int self, const std::vector<int>& p) {
            t.accumulate(p[0], s * t.grads_[self]);
        });
    }

    int add_const(int a, double c) {
        Matrix v = value(a);
        for (std::size_t i = 0; i < v.size(); ++i) v.data()[i] += c;
        return push(std::move(v), {a}, [](Tape& t, int self, const std::vector<int>& p) {
            t.accumulate(p[0], t.grads_[self]);
        });
    }

    // x: m x k, bias: m x 1 added to every column.
    int add_bias_cols(int x, int bias) {
        const Matrix& xm = value(x);
        const Matrix& bm = value(bias);
        if (bm.cols() != 1 || bm.rows() != xm.rows())
            throw ShapeError("add_bias_cols: bias " + bm.shape_str() + " vs input " + xm.shape_str());
        Matrix v = xm;
        for (std::size_t i = 0; i < v.rows(); ++i) {
            double* row = v.row_ptr(i);
            const double bi = bm(i, 0);
            for (std::size_t j = 0; j < v.cols(); ++j) row[j] += bi;
        }
        return push(std::move(v), {x, bias}, [](Tape& t, int self, const std::vector<int>& p) {
            const Matrix& d = t.grads_[self];
            t.accumulate(p[0], d);
            Matrix db(t.value(p[1]).rows(), 1);
            for (std::size_t i = 0; i < d.rows(); ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < d.cols(); ++j) s += d(i, j);
                db(i, 0) = s;
            }
            t.accumulate(p[1], std::move(db));
        });
    }

    int relu(int a) {
        Matrix v = hyps::relu(value(a));
        return push(std::move(v), {a}, [](Tape& t, int self, const std::vector<int>& p) {
            const Matrix& d = t.grads_[self];
            const Matrix& x = t.value(p[0]);
            Matrix dx(x.rows(), x.cols());
            for (std::size_t i = 0; i < x.size(); ++i)
                dx.data()[i] = x.data()[i] > 0.0 ? d.data()[i] : 0.0;
            t.accumulate(p[0], std::move(dx));
        });
    }

    int sigmoid(int a) {
        const Matrix& x = value(a);
        Matrix v(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double z = x.data()[i];
            v.data()[i] = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                                   : std::exp(z) / (1.0 + std::exp(z));
        }
        return push(std::move(v), {a}, [](Tape& t, int self, const std::vector<int>& p) {
            const Matrix& d = t.grads_[self];
            const Matrix& y = t.value(self);
            Matrix dx(y.rows(), y.cols());
            for (std::size_t i = 0; i < y.size(); ++i) {
                const double yi = y.data()[i];
                dx.data()[i] = d.data()[i] * yi * (1.0 - yi);
            }
            t.accumulate(p[0], std::move(dx));
        });
    }

    int transpose(int a) {
        Matrix v = hyps::transpose(value(a));
        return push(std::move(v), {a}, [](Tape& t, int self, const std::vector<int>& p) {
            t.accumulate(p[0], hyps::transpose(t.grads_[self]));
        });
    }

    // Softmax across each row independently (rows are attention queries).
    int softmax_rows(int a) {
        const Matrix& x = value(a);
        Matrix v(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.rows(); ++i) {
            double mx = x(i, 0);
            for (std::size_t j = 1; j < x.cols(); ++j) mx = std::max(mx, x(i, j));
            double sum = 0.0;
            for (std::size_t j = 0; j < x.cols(); ++j) {
                const double e = std::exp(x(i, j) - mx);
                v(i, j) = e;
                sum += e;
            }
            for (std::size_t j = 0; j < x.cols(); ++j) v(i, j) /= sum;
        }
        return push(std::move(v), {a}, [](Tape& t, int self, const std::vector<int>& p) {
            const Matrix& d = t.grads_[self];
            const Matrix& y = t.value(self);
            Matrix dx(y.rows(), y.cols());
            for (std::size_t i = 0; i < y.rows(); ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < y.cols(); ++j) dot += d(i, j) * y(i, j);
                for (std::size_t j = 0; j < y.cols(); ++j)
                    dx(i, j) = y(i, j) * (d(i, j) - dot);
            }
            t.accumulate(p[0], std::move(dx));
        });
    }

    // Normalizes each column over its rows (feature axis), then applies
    // per-row gain and shift: y(i,j) = gamma(i) * xhat(i,j) + beta(i).
    int layer_norm_cols(int x, int gamma, int beta, double eps = 1e-5) {
        const Matrix& xm = value(x);
        const Matrix& gm = value(gamma);
        const Matrix& bm = value(beta);
        const std::size_t d = xm.rows(), n = xm.cols();
        if (gm.rows() != d || gm.cols() != 1 || bm.rows() != d || bm.cols() != 1)
            throw ShapeError("layer_norm_cols: gamma/beta must be " + std::to_string(d) + "x1");
        Matrix xhat(d, n);
        std::vector<double> inv_std(n);
        for (std::size_t j = 0; j < n; ++j) {
            double mu = 0.0;
            for (std::size_t i = 0; i < d; ++i) mu += xm(i, j);
            mu /= static_cast<double>(d);
            double var = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                const double c = xm(i, j) - mu;
                var += c * c;
            }
            var /= static_cast<double>(d);
            const double is = 1.0 / std::sqrt(var + eps);
            inv_std[j] = is;
            for (std::size_t i = 0; i < d; ++i) xhat(i, j) = (xm(i, j) - mu) * is;
        }
        Matrix v(d, n);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < d; ++i) v(i, j) = gm(i, 0) * xhat(i, j) + bm(i, 0);
        return push(std::move(v), {x, gamma, beta},
                    [xhat = std::move(xhat), inv_std = std::move(inv_std)](
                        Tape& t, int self, const std::vector<int>& p) {
            const Matrix& dy = t.grads_[self];
            const Matrix& gm = t.value(p[1]);
            const std::size_t d = dy.rows(), n = dy.cols();
            Matrix dg(d, 1), db(d, 1);
            for (std::size_t i = 0; i < d; ++i) {
                double sg = 0.0, sb = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    sg += dy(i, j) * xhat(i, j);
                    sb += dy(i, j);
                }
                dg(i, 0) = sg;
                db(i, 0) = sb;
            }
            Matrix dx(d, n);
            for (std::size_t j = 0; j < n; ++j) {
                double m1 = 0.0, m2 = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    const double dh = dy(i, j) * gm(i, 0);
                    m1 += dh;
                    m2 += dh * xhat(i, j);
                }
                m1 /= static_cast<double>(d);
                m2 /= static_cast<double>(d);
                for (std::size_t i = 0; i < d; ++i) {
                    const double dh = dy(i, j) * gm(i, 0);
                    dx(i, j) = (dh - m1 - xhat(i, j) * m2) * inv_std[j];
                }
            }
            t.accumulate(p[0], std::move(dx));
            t.accumulate(p[1], std::move(dg));
            t.accumulate(p[2], std::move(db));
        });
    }

    // out(:, t) = a(:, idx[t]); duplicates allowed (backward scatter-adds).
    // Covers window partition, cyclic shift and nearest-neighbor upsample.
    int gather_cols(int a, std::vector<std::size_t> idx) {
        const Matrix& x = value(a);
        for (std::size_t t = 0; t < idx.size(); ++t)
            if (idx[t] >= x.cols())
                throw ShapeError("gather_cols: index " + std::to_string(idx[t]) +
                                 " out of range for " + x.shape_str());
        Matrix v(x.rows(), idx.size());
        for (std::size_t i = 0; i < x.rows(); ++i) {
            const double* src = x.row_ptr(i);
            double* dst = v.row_ptr(i);
            for (std::size_t t = 0; t < idx.size(); ++t) dst[t] = src[idx[t]];
        }
        return push(std::move(v), {a},
                    [idx = std::move(idx)](Tape& t, int self, const std::vector<int>& p) {
            const Matrix& d = t.grads_[self];
            const Matrix& x = t.value(p[0]);
            Matrix dx(x.rows(), x.cols());
            for (std::size_t i = 0; i < x.rows(); ++i) {
                double* drow = dx.row_ptr(i);
                const double* grow = d.row_ptr(i);
                for (std::size_t c = 0; c < idx.size(); ++c) drow[idx[c]] += grow[c];
            }
            t.accumulate(p[0], std::move(dx));
        });
    }

    int concat_cols(const std::vector<int>& parts) {
        if (parts.empty()) throw UsageError("concat_cols: no parts");
        const std::size_t rows = value(parts[0]).rows();
        std::size_t cols = 0;
        for (int p : parts) {
            if (value(p).rows() != rows)
                throw ShapeError("concat_cols: row mismatch " + value(p).shape_str());
            cols += value(p).cols();
        }
        Matrix v(rows, cols);
        std::size_t off = 0;
        for (int p : parts) {
            const Matrix& x = value(p);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < x.cols(); ++j) v(i, off + j) = x(i, j);
            off += x.cols();
        }
        return push(std::move(v), parts, [](Tape& t, int self, const std::vector<int>& p) {
            const Matrix& d = t.grads_[self];
            std::size_t off = 0;
            for (int part : p) {
                const Matrix& x = t.value(part);
                Matrix dp(x.rows(), x.cols());
                for (std::size_t i = 0; i < x.rows(); ++i)
                    for (std::size_t j = 0; j < x.cols(); ++j) dp(i, j) = d(i, off + j);
                off += x.cols();
                t.accumulate(part, std::move(dp));
            }
        });
    }

    int concat_rows(const std::vector<int>& parts) {
        if (parts.empty()) throw UsageError("concat_rows: no parts");
        const std::size_t cols = value(parts[0]).cols();
        std::size_t rows = 0;
        for (int p : parts) {
            if (value(p).cols() != cols)
                throw ShapeError("concat_rows: column mismatch " + value(p).shape_str());
            rows += value(p).rows();
        }
        Matrix v(rows, cols);
        std::size_t off = 0;
        for (int p : parts) {
            const Matrix& x = value(p);
            for (std::size_t i = 0; i < x.rows(); ++i)
                for (std::size_t j = 0; j < cols; ++j) v(off + i, j) = x(i, j);
            off += x.rows();
        }
        return push(std::move(v), parts, [](Tape& t, int self, const std::vector<int>& p) {
            const Matrix& d = t.grads_[self];
            std::size_t off = 0;
            for (int part : p) {
                const Matrix& x = t.value(part);
                Matrix dp(x.rows(), x.cols());
                for (std::size_t i = 0; i < x.rows(); ++i)
                    for (std::size_t j = 0; j < x.cols(); ++j) dp(i, j) = d(off + i, j);
                off += x.rows();
                t.accumulate(part, std::move(dp));
            }
        });
    }

    // Rows [r0, r1) of a.
    int slice_rows(int a, std::size_t r0, std::size_t r1) {
        const Matrix& x = value(a);
        if (r0 >= r1 || r1 > x.rows())
            throw ShapeError("slice_rows: [" + std::to_string(r0) + ", " + std::to_string(r1) +
                             ") out of range for " + x.shape_str());
        Matrix v(r1 - r0, x.cols());
        for (std::size_t i = r0; i < r1; ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) v(i - r0, j) = x(i, j);
        return push(std::move(v), {a}, [r0, r1](Tape& t, int self, const std::vector<int>& p) {
            const Matrix& d = t.grads_[self];
            const Matrix& x = t.value(p[0]);
            Matrix dx(x.rows(), x.cols());
            for (std::size_t i = r0; i < r1; ++i)
                for (std::size_t j = 0; j < x.cols(); ++j) dx(i, j) = d(i - r0, j);
            t.accumulate(p[0], std::move(dx));
        });
    }

    int hadamard(int a, int b) {
        Matrix v = hyps::hadamard(value(a), value(b));
        return push(std::move(v), {a, b}, [](Tape& t, int self, const std::vector<int>& p) {
            const Matrix& d = t.grads_[self];
            t.accumulate(p[0], hyps::hadamard(d, t.value(p[1])));
            t.accumulate(p[1], hyps::hadamard(d, t.value(p[0])));
        });
    }

    int sum_all(int a) {
        Matrix v(1, 1);
        v(0, 0) = hyps::sum_all(value(a));
        return push(std::move(v), {a}, [](Tape& t, int self, const std::vector<int>& p) {
            const double d = t.grads_[self](0, 0);
            const Matrix& x = t.value(p[0]);
            Matrix dx(x.rows(), x.cols());
            for (std::size_t i = 0; i < dx.size(); ++i) dx.data()[i] = d;
            t.accumulate(p[0], std::move(dx));
        });
    }

    // Elementwise a / b.
    int div(int a, int b) {
        const Matrix& am = value(a);
        const Matrix& bm = value(b);
        require_same_shape(am, bm, "div");
        Matrix v(am.rows(), am.cols());
        for (std::size_t i = 0; i < v.size(); ++i) v.data()[i] = am.data()[i] / bm.data()[i];
        return push(std::move(v), {a, b}, [](Tape& t, int self, const std::vector<int>& p) {
            const Matrix& d = t.grads_[self];
            const Matrix& bm = t.value(p[1]);
            const Matrix& y = t.value(self);
            Matrix da(d.rows(), d.cols()), db(d.rows(), d.cols());
            for (std::size_t i = 0; i < d.size(); ++i) {
                da.data()[i] = d.data()[i] / bm.data()[i];
                db.data()[i] = -d.data()[i] * y.data()[i] / bm.data()[i];
            }
            t.accumulate(p[0], std::move(da));
            t.accumulate(p[1], std::move(db));
        });
    }

    void backward(int loss) {
        check(loss);
        const Matrix& lv = nodes_[loss].value;
        if (lv.rows() != 1 || lv.cols() != 1)
            throw UsageError("backward: loss node must be 1x1, got " + lv.shape_str());
        grads_.assign(nodes_.size(), Matrix());
        grads_[loss] = Matrix(1, 1, 1.0);
        for (int id = loss; id >= 0; --id) {
            if (grads_[id].size() == 0) continue;
            if (nodes_[id].backward) nodes_[id].backward(*this, id, nodes_[id].parents);
        }
    }

private:
    using BackwardFn = std::function<void(Tape&, int, const std::vector<int>&)>;

    struct Node {
        Matrix value;
        std::vector<int> parents;
        BackwardFn backward;
    };

    int check(int id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
            throw UsageError("tape: bad node id " + std::to_string(id));
        return id;
    }

    int push(Matrix v, std::vector<int> parents, BackwardFn fn) {
        for (int p : parents) check(p);
        nodes_.push_back(Node{std::move(v), std::move(parents), std::move(fn)});
        return static_cast<int>(nodes_.size()) - 1;
    }

    void accumulate(int id, Matrix delta) {
        Matrix& g = grads_[id];
        if (g.size() == 0) {
            g = std::move(delta);
        } else {
            require_same_shape(g, delta, "grad accumulate");
            for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += delta.data()[i];
        }
    }

    std::vector<Node> nodes_;
    std::vector<Matrix> grads_;
};

// Maps parameter storage to tape leaves so a model can be walked once
// per batch; frozen parameters are bound too (their gradients are simply
// never applied).
struct TapeBinding {
    Tape* tape = nullptr;
    std::unordered_map<const Matrix*, int> ids;

    int bind(const Matrix* p) {
        auto it = ids.find(p);
        if (it != ids.end()) return it->second;
        const int id = tape->leaf(*p);
        ids.emplace(p, id);
        return id;
    }

    int id(const Matrix* p) const {
        auto it = ids.find(p);
        if (it == ids.end()) throw UsageError("tape binding: parameter not bound");
        return it->second;
    }

    bool bound(const Matrix* p) const { return ids.count(p) != 0; }
};

} // namespace hyps
