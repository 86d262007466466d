#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "ctrldiff/errors.hpp"
#include "ctrldiff/tensor.hpp"

namespace ctrldiff {

/// Reverse-mode gradient tape over Tensor<T> values.
///
/// Nodes are appended in evaluation order, so parents always precede their
/// consumers and the backward sweep is a single reverse walk over the node
/// array; every node is visited exactly once.
template <typename T>
class Tape {
  public:
    struct Var {
        int id = -1;
        bool valid() const { return id >= 0; }
    };

    struct Node {
        Tensor<T> value;
        Tensor<T> grad;  // allocated lazily
        std::vector<int> parents;
        std::function<void(Tape&, int)> backprop;  // empty for leaves
        bool requires_grad = false;
        bool has_grad = false;
    };

    /// Leaf that participates in differentiation (a parameter).
    Var param(Tensor<T> value) { return push(std::move(value), {}, nullptr, true); }

    /// Leaf treated as a constant.
    Var constant(Tensor<T> value) { return push(std::move(value), {}, nullptr, false); }

    const Tensor<T>& value(Var v) const { return node(v).value; }

    /// Gradient accumulated for `v` by the last backward() call.
    Tensor<T> grad(Var v) const {
        const Node& n = node(v);
        if (n.has_grad) return n.grad;
        return Tensor<T>(n.value.shape());
    }

    std::size_t size() const { return nodes_.size(); }

    // ---- arithmetic ----

    Var add(Var a, Var b) {
        const Tensor<T>&A = value(a), &B = value(b);
        if (!A.same_shape(B)) throw DimensionError("add: shape mismatch");
        Tensor<T> out(A.shape());
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = A[i] + B[i];
        return push(std::move(out), {a.id, b.id}, [](Tape& t, int id) {
            Node& n = t.nodes_[id];
            t.accumulate(n.parents[0], n.grad.raw());
            t.accumulate(n.parents[1], n.grad.raw());
        });
    }

    Var mul(Var a, Var b) {
        const Tensor<T>&A = value(a), &B = value(b);
        if (!A.same_shape(B)) throw DimensionError("mul: shape mismatch");
        Tensor<T> out(A.shape());
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = A[i] * B[i];
        return push(std::move(out), {a.id, b.id}, [](Tape& t, int id) {
            Node& n = t.nodes_[id];
            const Tensor<T>& A = t.nodes_[n.parents[0]].value;
            const Tensor<T>& B = t.nodes_[n.parents[1]].value;
            t.accumulate_fn(n.parents[0], n.grad.numel(),
                            [&](std::size_t i) { return n.grad[i] * B[i]; });
            t.accumulate_fn(n.parents[1], n.grad.numel(),
                            [&](std::size_t i) { return n.grad[i] * A[i]; });
        });
    }

    Var scale(Var a, T c) {
        const Tensor<T>& A = value(a);
        Tensor<T> out(A.shape());
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = A[i] * c;
        return push(std::move(out), {a.id}, [c](Tape& t, int id) {
            Node& n = t.nodes_[id];
            t.accumulate_fn(n.parents[0], n.grad.numel(),
                            [&](std::size_t i) { return n.grad[i] * c; });
        });
    }

    /// x + M for a constant tensor M of the same shape (attention bias).
    Var add_const(Var a, const Tensor<T>& m) {
        const Tensor<T>& A = value(a);
        if (!A.same_shape(m)) throw DimensionError("add_const: shape mismatch");
        Tensor<T> out(A.shape());
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = A[i] + m[i];
        return push(std::move(out), {a.id}, [](Tape& t, int id) {
            Node& n = t.nodes_[id];
            t.accumulate(n.parents[0], n.grad.raw());
        });
    }

    /// x * M elementwise for a constant tensor M (dropout mask).
    Var mul_const(Var a, Tensor<T> m) {
        const Tensor<T>& A = value(a);
        if (!A.same_shape(m)) throw DimensionError("mul_const: shape mismatch");
        Tensor<T> out(A.shape());
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = A[i] * m[i];
        auto mask = std::make_shared<Tensor<T>>(std::move(m));
        return push(std::move(out), {a.id}, [mask](Tape& t, int id) {
            Node& n = t.nodes_[id];
            t.accumulate_fn(n.parents[0], n.grad.numel(),
                            [&](std::size_t i) { return n.grad[i] * (*mask)[i]; });
        });
    }

    /// Broadcast-add a length-n vector to every row of an m-by-n matrix.
    Var add_rowvec(Var x, Var v) {
        const Tensor<T>& X = value(x);
        const Tensor<T>& V = value(v);
        if (X.rank() != 2) throw DimensionError("add_rowvec: matrix required");
        if (V.numel() != X.shape()[1]) throw DimensionError("add_rowvec: width mismatch");
        const std::size_t rows = X.shape()[0], cols = X.shape()[1];
        Tensor<T> out(X.shape());
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c)
                out.at(r, c) = X.at(r, c) + V[c];
        return push(std::move(out), {x.id, v.id}, [rows, cols](Tape& t, int id) {
            Node& n = t.nodes_[id];
            t.accumulate(n.parents[0], n.grad.raw());
            Tensor<T>& g = t.grad_slot(n.parents[1]);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) g[c] += n.grad[r * cols + c];
        });
    }

    // ---- linear algebra ----

    Var matmul(Var a, Var b) {
        const Tensor<T>&A = value(a), &B = value(b);
        if (A.rank() != 2 || B.rank() != 2 || A.shape()[1] != B.shape()[0])
            throw DimensionError("matmul: incompatible shapes");
        const std::size_t m = A.shape()[0], k = A.shape()[1], n = B.shape()[1];
        Tensor<T> out({m, n});
        detail::gemm_nn(A.data(), B.data(), out.data(), m, k, n);
        return push(std::move(out), {a.id, b.id}, [m, k, n](Tape& t, int id) {
            Node& nd = t.nodes_[id];
            const Tensor<T>& A = t.nodes_[nd.parents[0]].value;
            const Tensor<T>& B = t.nodes_[nd.parents[1]].value;
            if (t.wants_grad(nd.parents[0])) {
                Tensor<T> da({m, k});
                detail::gemm_nt(nd.grad.data(), B.data(), da.data(), m, n, k);
                t.accumulate(nd.parents[0], da.raw());
            }
            if (t.wants_grad(nd.parents[1])) {
                Tensor<T> db({k, n});
                detail::gemm_tn(A.data(), nd.grad.data(), db.data(), k, m, n);
                t.accumulate(nd.parents[1], db.raw());
            }
        });
    }

    /// a (m-by-k) times b (n-by-k) transposed -> m-by-n.
    Var matmul_nt(Var a, Var b) {
        const Tensor<T>&A = value(a), &B = value(b);
        if (A.rank() != 2 || B.rank() != 2 || A.shape()[1] != B.shape()[1])
            throw DimensionError("matmul_nt: incompatible shapes");
        const std::size_t m = A.shape()[0], k = A.shape()[1], n = B.shape()[0];
        Tensor<T> out({m, n});
        detail::gemm_nt(A.data(), B.data(), out.data(), m, k, n);
        return push(std::move(out), {a.id, b.id}, [m, k, n](Tape& t, int id) {
            Node& nd = t.nodes_[id];
            const Tensor<T>& A = t.nodes_[nd.parents[0]].value;
            const Tensor<T>& B = t.nodes_[nd.parents[1]].value;
            if (t.wants_grad(nd.parents[0])) {
                Tensor<T> da({m, k});
                detail::gemm_nn(nd.grad.data(), B.data(), da.data(), m, n, k);
                t.accumulate(nd.parents[0], da.raw());
            }
            if (t.wants_grad(nd.parents[1])) {
                Tensor<T> db({n, k});
                detail::gemm_tn(nd.grad.data(), A.data(), db.data(), n, m, k);
                t.accumulate(nd.parents[1], db.raw());
            }
        });
    }

    // ---- nonlinearities ----

    Var softmax_lastdim(Var x) {
        Tensor<T> out = ctrldiff::softmax_lastdim(value(x));
        const std::size_t width = out.shape().back();
        return push(std::move(out), {x.id}, [width](Tape& t, int id) {
            Node& n = t.nodes_[id];
            const Tensor<T>& y = n.value;
            const std::size_t rows = y.numel() / width;
            Tensor<T>& gx = t.grad_slot(n.parents[0]);
            for (std::size_t r = 0; r < rows; ++r) {
                const T* yr = y.data() + r * width;
                const T* gr = n.grad.data() + r * width;
                T dot = T(0);
                for (std::size_t i = 0; i < width; ++i) dot += yr[i] * gr[i];
                for (std::size_t i = 0; i < width; ++i)
                    gx[r * width + i] += yr[i] * (gr[i] - dot);
            }
        });
    }

    Var layer_norm(Var x, Var gain, Var bias, T eps) {
        Tensor<T> out = ctrldiff::layer_norm(value(x), value(gain), value(bias), eps);
        const std::size_t width = out.shape().back();
        return push(std::move(out), {x.id, gain.id, bias.id}, [width, eps](Tape& t, int id) {
            Node& n = t.nodes_[id];
            const Tensor<T>& X = t.nodes_[n.parents[0]].value;
            const Tensor<T>& G = t.nodes_[n.parents[1]].value;
            const std::size_t rows = X.numel() / width;
            Tensor<T>& gx = t.grad_slot(n.parents[0]);
            Tensor<T>& gg = t.grad_slot(n.parents[1]);
            Tensor<T>& gb = t.grad_slot(n.parents[2]);
            std::vector<T> xhat(width);
            for (std::size_t r = 0; r < rows; ++r) {
                const T* xr = X.data() + r * width;
                const T* gr = n.grad.data() + r * width;
                T mean = T(0);
                for (std::size_t i = 0; i < width; ++i) mean += xr[i];
                mean /= T(width);
                T var = T(0);
                for (std::size_t i = 0; i < width; ++i) {
                    const T d = xr[i] - mean;
                    var += d * d;
                }
                var /= T(width);
                const T inv = T(1) / std::sqrt(var + eps);
                T sum_gxh = T(0), sum_gxh_xhat = T(0);
                for (std::size_t i = 0; i < width; ++i) {
                    xhat[i] = (xr[i] - mean) * inv;
                    const T gxh = gr[i] * G[i];
                    sum_gxh += gxh;
                    sum_gxh_xhat += gxh * xhat[i];
                    gg[i] += gr[i] * xhat[i];
                    gb[i] += gr[i];
                }
                for (std::size_t i = 0; i < width; ++i) {
                    const T gxh = gr[i] * G[i];
                    gx[r * width + i] +=
                        inv * (gxh - (sum_gxh + xhat[i] * sum_gxh_xhat) / T(width));
                }
            }
        });
    }

    Var relu(Var x) {
        const Tensor<T>& X = value(x);
        Tensor<T> out(X.shape());
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = X[i] > T(0) ? X[i] : T(0);
        return push(std::move(out), {x.id}, [](Tape& t, int id) {
            Node& n = t.nodes_[id];
            const Tensor<T>& X = t.nodes_[n.parents[0]].value;
            t.accumulate_fn(n.parents[0], n.grad.numel(), [&](std::size_t i) {
                return X[i] > T(0) ? n.grad[i] : T(0);
            });
        });
    }

    Var gelu(Var x) {
        const Tensor<T>& X = value(x);
        Tensor<T> out(X.shape());
        constexpr double inv_sqrt2 = 0.70710678118654752440;
        for (std::size_t i = 0; i < out.numel(); ++i) {
            const double v = static_cast<double>(X[i]);
            out[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * inv_sqrt2)));
        }
        return push(std::move(out), {x.id}, [](Tape& t, int id) {
            Node& n = t.nodes_[id];
            const Tensor<T>& X = t.nodes_[n.parents[0]].value;
            constexpr double inv_sqrt2 = 0.70710678118654752440;
            constexpr double inv_sqrt2pi = 0.39894228040143267794;
            t.accumulate_fn(n.parents[0], n.grad.numel(), [&](std::size_t i) {
                const double v = static_cast<double>(X[i]);
                const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
                const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
                return n.grad[i] * static_cast<T>(cdf + v * pdf);
            });
        });
    }

    // ---- shape surgery ----

    Var slice_rows(Var x, std::size_t r0, std::size_t r1) {
        const Tensor<T>& X = value(x);
        if (X.rank() != 2 || r0 >= r1 || r1 > X.shape()[0])
            throw DimensionError("slice_rows: bad range");
        const std::size_t cols = X.shape()[1];
        Tensor<T> out({r1 - r0, cols});
        std::copy(X.data() + r0 * cols, X.data() + r1 * cols, out.data());
        return push(std::move(out), {x.id}, [r0, cols](Tape& t, int id) {
            Node& n = t.nodes_[id];
            Tensor<T>& gx = t.grad_slot(n.parents[0]);
            for (std::size_t i = 0; i < n.grad.numel(); ++i) gx[r0 * cols + i] += n.grad[i];
        });
    }

    Var slice_cols(Var x, std::size_t c0, std::size_t c1) {
        const Tensor<T>& X = value(x);
        if (X.rank() != 2 || c0 >= c1 || c1 > X.shape()[1])
            throw DimensionError("slice_cols: bad range");
        const std::size_t rows = X.shape()[0], cols = X.shape()[1], w = c1 - c0;
        Tensor<T> out({rows, w});
        for (std::size_t r = 0; r < rows; ++r)
            std::copy(X.data() + r * cols + c0, X.data() + r * cols + c1, out.data() + r * w);
        return push(std::move(out), {x.id}, [c0, cols, w](Tape& t, int id) {
            Node& n = t.nodes_[id];
            Tensor<T>& gx = t.grad_slot(n.parents[0]);
            const std::size_t rows = n.grad.shape()[0];
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < w; ++c)
                    gx[r * cols + c0 + c] += n.grad[r * w + c];
        });
    }

    Var concat_cols(const std::vector<Var>& parts) {
        if (parts.empty()) throw DimensionError("concat_cols: no inputs");
        const std::size_t rows = value(parts[0]).shape()[0];
        std::size_t total = 0;
        std::vector<int> ids;
        std::vector<std::size_t> widths;
        for (Var p : parts) {
            const Tensor<T>& v = value(p);
            if (v.rank() != 2 || v.shape()[0] != rows)
                throw DimensionError("concat_cols: row mismatch");
            widths.push_back(v.shape()[1]);
            total += v.shape()[1];
            ids.push_back(p.id);
        }
        Tensor<T> out({rows, total});
        std::size_t off = 0;
        for (std::size_t p = 0; p < parts.size(); ++p) {
            const Tensor<T>& v = value(parts[p]);
            for (std::size_t r = 0; r < rows; ++r)
                std::copy(v.data() + r * widths[p], v.data() + (r + 1) * widths[p],
                          out.data() + r * total + off);
            off += widths[p];
        }
        return push(std::move(out), ids, [widths, total](Tape& t, int id) {
            Node& n = t.nodes_[id];
            const std::size_t rows = n.grad.shape()[0];
            std::size_t off = 0;
            for (std::size_t p = 0; p < n.parents.size(); ++p) {
                Tensor<T>& gp = t.grad_slot(n.parents[p]);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < widths[p]; ++c)
                        gp[r * widths[p] + c] += n.grad[r * total + off + c];
                off += widths[p];
            }
        });
    }

    /// Row lookup: out[i] = table[ids[i]]. Gradient scatter-adds by id.
    Var gather_rows(Var table, std::vector<int> ids) {
        const Tensor<T>& Tb = value(table);
        if (Tb.rank() != 2) throw DimensionError("gather_rows: table must be rank 2");
        const std::size_t cols = Tb.shape()[1];
        Tensor<T> out({ids.size(), cols});
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= Tb.shape()[0])
                throw IndexError("gather_rows: id " + std::to_string(ids[i]) + " out of range");
            std::copy(Tb.data() + ids[i] * cols, Tb.data() + (ids[i] + 1) * cols,
                      out.data() + i * cols);
        }
        auto idv = std::make_shared<std::vector<int>>(std::move(ids));
        return push(std::move(out), {table.id}, [idv, cols](Tape& t, int id) {
            Node& n = t.nodes_[id];
            Tensor<T>& gt = t.grad_slot(n.parents[0]);
            for (std::size_t i = 0; i < idv->size(); ++i)
                for (std::size_t c = 0; c < cols; ++c)
                    gt[(*idv)[i] * cols + c] += n.grad[i * cols + c];
        });
    }

    /// Rows in [r0, r1) become a*x + C (C constant); all other rows are copied
    /// bit-for-bit. This is the differentiable path of partial noising.
    Var rows_affine(Var x, std::size_t r0, std::size_t r1, T a, const Tensor<T>& c) {
        const Tensor<T>& X = value(x);
        if (X.rank() != 2 || r1 > X.shape()[0] || r0 > r1)
            throw DimensionError("rows_affine: bad range");
        const std::size_t cols = X.shape()[1];
        if (c.shape() != std::vector<std::size_t>({r1 - r0, cols}))
            throw DimensionError("rows_affine: constant shape mismatch");
        Tensor<T> out = X;
        for (std::size_t r = r0; r < r1; ++r)
            for (std::size_t col = 0; col < cols; ++col)
                out.at(r, col) = a * X.at(r, col) + c.at(r - r0, col);
        out.check_finite("rows_affine");
        return push(std::move(out), {x.id}, [r0, r1, a, cols](Tape& t, int id) {
            Node& n = t.nodes_[id];
            Tensor<T>& gx = t.grad_slot(n.parents[0]);
            const std::size_t total = n.grad.numel();
            for (std::size_t i = 0; i < total; ++i) {
                const std::size_t r = i / cols;
                gx[i] += (r >= r0 && r < r1) ? a * n.grad[i] : n.grad[i];
            }
        });
    }

    // ---- reductions ----

    Var sum(Var x) {
        const Tensor<T>& X = value(x);
        T s = T(0);
        for (std::size_t i = 0; i < X.numel(); ++i) s += X[i];
        return push(Tensor<T>::scalar(s), {x.id}, [](Tape& t, int id) {
            Node& n = t.nodes_[id];
            const T g = n.grad[0];
            t.accumulate_fn(n.parents[0], t.nodes_[n.parents[0]].value.numel(),
                            [g](std::size_t) { return g; });
        });
    }

    Var mean(Var x) {
        const std::size_t n = value(x).numel();
        return scale(sum(x), T(1) / T(n));
    }

    /// Mean over all elements of the squared difference.
    Var mse(Var a, Var b) {
        const Tensor<T>&A = value(a), &B = value(b);
        if (!A.same_shape(B)) throw DimensionError("mse: shape mismatch");
        const std::size_t n = A.numel();
        T s = T(0);
        for (std::size_t i = 0; i < n; ++i) {
            const T d = A[i] - B[i];
            s += d * d;
        }
        return push(Tensor<T>::scalar(s / T(n)), {a.id, b.id}, [n](Tape& t, int id) {
            Node& nd = t.nodes_[id];
            const Tensor<T>& A = t.nodes_[nd.parents[0]].value;
            const Tensor<T>& B = t.nodes_[nd.parents[1]].value;
            const T g = nd.grad[0] * T(2) / T(n);
            t.accumulate_fn(nd.parents[0], n, [&](std::size_t i) { return g * (A[i] - B[i]); });
            t.accumulate_fn(nd.parents[1], n, [&](std::size_t i) { return g * (B[i] - A[i]); });
        });
    }

    /// Mean of -log softmax(logits)[i, targets[i]].
    Var cross_entropy_logits(Var logits, std::vector<int> targets) {
        const T loss = ctrldiff::cross_entropy_logits(value(logits), targets);
        const std::size_t rows = value(logits).shape()[0];
        const std::size_t v = value(logits).shape()[1];
        auto tg = std::make_shared<std::vector<int>>(std::move(targets));
        return push(Tensor<T>::scalar(loss), {logits.id}, [tg, rows, v](Tape& t, int id) {
            Node& n = t.nodes_[id];
            const Tensor<T>& L = t.nodes_[n.parents[0]].value;
            Tensor<T> sm = ctrldiff::softmax_lastdim(L);
            Tensor<T>& gl = t.grad_slot(n.parents[0]);
            const T g = n.grad[0] / T(rows);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t i = 0; i < v; ++i) gl[r * v + i] += g * sm[r * v + i];
                gl[r * v + (*tg)[r]] -= g;
            }
        });
    }

    // ---- backward ----

    /// Seeds the scalar root with gradient 1 and sweeps the tape once in
    /// reverse insertion order (reverse topological order by construction).
    void backward(Var loss) {
        Node& root = node(loss);
        if (root.value.numel() != 1)
            throw ContractError("backward requires a scalar root node");
        grad_slot(loss.id)[0] = T(1);
        for (int id = loss.id; id >= 0; --id) {
            Node& n = nodes_[id];
            if (!n.has_grad || !n.backprop || !n.requires_grad) continue;
            n.backprop(*this, id);
        }
    }

  private:
    Var push(Tensor<T> value, std::vector<int> parents,
             std::function<void(Tape&, int)> backprop, bool leaf_requires_grad = false) {
        Node n;
        n.value = std::move(value);
        n.parents = std::move(parents);
        n.backprop = std::move(backprop);
        n.requires_grad = leaf_requires_grad;
        for (int p : n.parents)
            if (nodes_[p].requires_grad) n.requires_grad = true;
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size() - 1)};
    }

    Node& node(Var v) {
        if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
            throw ContractError("invalid tape variable");
        return nodes_[v.id];
    }
    const Node& node(Var v) const {
        if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
            throw ContractError("invalid tape variable");
        return nodes_[v.id];
    }

    bool wants_grad(int id) const { return nodes_[id].requires_grad; }

    Tensor<T>& grad_slot(int id) {
        Node& n = nodes_[id];
        if (!n.has_grad) {
            n.grad = Tensor<T>(n.value.shape());
            n.has_grad = true;
        }
        return n.grad;
    }

    void accumulate(int id, const std::vector<T>& contribution) {
        if (!wants_grad(id)) return;
        Tensor<T>& g = grad_slot(id);
        for (std::size_t i = 0; i < contribution.size(); ++i) g[i] += contribution[i];
    }

    template <typename F>
    void accumulate_fn(int id, std::size_t n, F f) {
        if (!wants_grad(id)) return;
        Tensor<T>& g = grad_slot(id);
        for (std::size_t i = 0; i < n; ++i) g[i] += f(i);
    }

    std::vector<Node> nodes_;
};

// ---- finite-difference oracle ----

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::vector<double> per_coordinate;   // flattened across params, in order
    std::vector<std::size_t> flagged;     // coordinates with error above flag_tol
};

/// Compares tape gradients of a scalar-valued function against central finite
/// differences. `build` must be deterministic: it receives a fresh tape plus
/// one Var per parameter and returns the scalar root.
template <typename BuildFn>
GradCheckResult grad_check(BuildFn build, const std::vector<Tensor<double>>& params,
                           double eps, double flag_tol = 1e-4) {
    using D = Tape<double>;
    auto evaluate = [&](const std::vector<Tensor<double>>& p) {
        D tape;
        std::vector<typename D::Var> vars;
        vars.reserve(p.size());
        for (const auto& t : p) vars.push_back(tape.param(t));
        typename D::Var loss = build(tape, vars);
        return tape.value(loss).value();
    };

    D tape;
    std::vector<typename D::Var> vars;
    for (const auto& t : params) vars.push_back(tape.param(t));
    typename D::Var loss = build(tape, vars);
    tape.backward(loss);
    std::vector<Tensor<double>> analytic;
    for (auto v : vars) analytic.push_back(tape.grad(v));

    GradCheckResult result;
    std::vector<Tensor<double>> work = params;
    for (std::size_t p = 0; p < params.size(); ++p) {
        for (std::size_t i = 0; i < params[p].numel(); ++i) {
            const double orig = work[p][i];
            work[p][i] = orig + eps;
            const double fplus = evaluate(work);
            work[p][i] = orig - eps;
            const double fminus = evaluate(work);
            work[p][i] = orig;
            const double fd = (fplus - fminus) / (2.0 * eps);
            const double ga = analytic[p][i];
            const double rel =
                std::abs(ga - fd) / std::max(1e-8, std::abs(ga) + std::abs(fd));
            result.per_coordinate.push_back(rel);
            if (rel > flag_tol) result.flagged.push_back(result.per_coordinate.size() - 1);
            result.max_rel_error = std::max(result.max_rel_error, rel);
        }
    }
    return result;
}

}  // namespace ctrldiff
