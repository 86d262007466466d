#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "ctrldiff/errors.hpp"

namespace ctrldiff {

enum class Dtype { float32, float64 };

template <typename T>
struct DtypeOf;
template <>
struct DtypeOf<float> {
    static constexpr Dtype value = Dtype::float32;
};
template <>
struct DtypeOf<double> {
    static constexpr Dtype value = Dtype::float64;
};

/// Dense row-major tensor. Rank 0 (scalar), 1 and 2 are used throughout;
/// shape is kept as a vector so invariants stay uniform.
template <typename T>
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(numel_of(shape_), T(0)) {}

    Tensor(std::vector<std::size_t> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (numel_of(shape_) != data_.size())
            throw DimensionError("tensor data length does not match shape");
    }

    static Tensor scalar(T v) { return Tensor({}, {v}); }

    static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }

    static std::size_t numel_of(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t e : shape) {
            if (e == 0) throw DimensionError("tensor extents must be positive");
            n *= e;
        }
        return n;
    }

    Dtype dtype() const { return DtypeOf<T>::value; }
    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    std::size_t rows() const { return rank() == 2 ? shape_[0] : (rank() == 1 ? 1 : 1); }
    std::size_t cols() const {
        return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 1);
    }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& raw() { return data_; }
    const std::vector<T>& raw() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    T value() const {
        if (numel() != 1) throw ContractError("value() requires a single-element tensor");
        return data_[0];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void check_finite(const char* where) const {
        for (const T& v : data_)
            if (!std::isfinite(static_cast<double>(v)))
                throw NumericError(std::string("non-finite value produced by ") + where);
    }

  private:
    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

namespace detail {

template <typename T>
using EigenMap =
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstEigenMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Raw GEMM kernels. C = op(A) * op(B), no aliasing between c and a/b.
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    ConstEigenMap<T> A(a, m, k);
    ConstEigenMap<T> B(b, k, n);
    EigenMap<T> C(c, m, n);
    C.noalias() = A * B;
}

template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    ConstEigenMap<T> A(a, m, k);
    ConstEigenMap<T> B(b, n, k);
    EigenMap<T> C(c, m, n);
    C.noalias() = A * B.transpose();
}

template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    ConstEigenMap<T> A(a, k, m);
    ConstEigenMap<T> B(b, k, n);
    EigenMap<T> C(c, m, n);
    C.noalias() = A.transpose() * B;
}

}  // namespace detail

/// Matrix product of two rank-2 tensors.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2) throw DimensionError("matmul requires rank-2 tensors");
    if (a.shape()[1] != b.shape()[0])
        throw DimensionError("matmul inner dimensions disagree: " +
                             std::to_string(a.shape()[1]) + " vs " +
                             std::to_string(b.shape()[0]));
    Tensor<T> c({a.shape()[0], b.shape()[1]});
    detail::gemm_nn(a.data(), b.data(), c.data(), a.shape()[0], a.shape()[1], b.shape()[1]);
    c.check_finite("matmul");
    return c;
}

/// Row-wise softmax over the last dimension, computed with max-subtraction.
template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
    if (x.rank() < 1 || x.numel() == 0) throw DimensionError("softmax requires rank >= 1");
    const std::size_t width = x.shape().back();
    const std::size_t rows = x.numel() / width;
    Tensor<T> out(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* in = x.data() + r * width;
        T* o = out.data() + r * width;
        T mx = in[0];
        for (std::size_t i = 1; i < width; ++i) mx = std::max(mx, in[i]);
        T denom = T(0);
        for (std::size_t i = 0; i < width; ++i) {
            o[i] = std::exp(in[i] - mx);
            denom += o[i];
        }
        for (std::size_t i = 0; i < width; ++i) o[i] /= denom;
    }
    out.check_finite("softmax_lastdim");
    return out;
}

/// Per-row standardization followed by a row-wise affine (gain, bias over the
/// last dimension).
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps) {
    if (x.rank() < 1 || x.shape().back() == 0)
        throw DimensionError("layer_norm requires a nonempty last dimension");
    const std::size_t width = x.shape().back();
    if (gain.numel() != width || bias.numel() != width)
        throw DimensionError("layer_norm gain/bias must match the last dimension");
    const std::size_t rows = x.numel() / width;
    Tensor<T> out(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* in = x.data() + r * width;
        T* o = out.data() + r * width;
        T mean = T(0);
        for (std::size_t i = 0; i < width; ++i) mean += in[i];
        mean /= T(width);
        T var = T(0);
        for (std::size_t i = 0; i < width; ++i) {
            const T d = in[i] - mean;
            var += d * d;
        }
        var /= T(width);
        const T inv = T(1) / std::sqrt(var + eps);
        for (std::size_t i = 0; i < width; ++i)
            o[i] = (in[i] - mean) * inv * gain[i] + bias[i];
    }
    out.check_finite("layer_norm");
    return out;
}

/// Mean of -log softmax(logits)[i, target_i] over rows.
template <typename T>
T cross_entropy_logits(const Tensor<T>& logits, const std::vector<int>& targets) {
    if (logits.rank() != 2) throw DimensionError("cross_entropy_logits requires rank-2 logits");
    const std::size_t n = logits.shape()[0];
    const std::size_t v = logits.shape()[1];
    if (targets.size() != n) throw DimensionError("one target per logits row required");
    T total = T(0);
    for (std::size_t r = 0; r < n; ++r) {
        const int t = targets[r];
        if (t < 0 || static_cast<std::size_t>(t) >= v)
            throw IndexError("target id " + std::to_string(t) + " out of range for vocab " +
                             std::to_string(v));
        const T* row = logits.data() + r * v;
        T mx = row[0];
        for (std::size_t i = 1; i < v; ++i) mx = std::max(mx, row[i]);
        T denom = T(0);
        for (std::size_t i = 0; i < v; ++i) denom += std::exp(row[i] - mx);
        total += -(row[t] - mx - std::log(denom));
    }
    const T loss = total / T(n);
    if (!std::isfinite(static_cast<double>(loss)))
        throw NumericError("non-finite value produced by cross_entropy_logits");
    return loss;
}

}  // namespace ctrldiff
