#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "tnrbm/errors.hpp"

namespace tnrbm {

using Dims = std::vector<std::size_t>;

namespace detail {

inline std::string dims_to_string(std::span<const std::size_t> dims) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < dims.size(); ++i)
        os << (i ? "," : "") << dims[i];
    os << ")";
    return os.str();
}

inline std::size_t checked_product(std::span<const std::size_t> dims) {
    if (dims.empty())
        throw ShapeError("tensor must have at least one mode");
    constexpr std::size_t limit = std::size_t(1) << 48;
    std::size_t p = 1;
    for (std::size_t d : dims) {
        if (d == 0)
            throw ShapeError("tensor dimensions must be positive");
        if (p > limit / d)
            throw TooLargeError("tensor size exceeds supported range");
        p *= d;
    }
    return p;
}

/// Column-major strides: first index fastest.
inline std::vector<std::size_t> strides_of(std::span<const std::size_t> dims) {
    std::vector<std::size_t> s(dims.size());
    std::size_t acc = 1;
    for (std::size_t k = 0; k < dims.size(); ++k) {
        s[k] = acc;
        acc *= dims[k];
    }
    return s;
}

} // namespace detail

/// Dense d-way tensor of 64-bit reals. Storage is a flat column-major array
/// (first index fastest), so the flat position of an entry coincides with the
/// linear-index map used for all (un)vectorization in this library.
class DenseTensor {
public:
    explicit DenseTensor(Dims dims)
        : dims_(std::move(dims)), data_(detail::checked_product(dims_), 0.0) {}

    DenseTensor(Dims dims, std::vector<double> data) : dims_(std::move(dims)), data_(std::move(data)) {
        if (data_.size() != detail::checked_product(dims_))
            throw ShapeError("data length does not match dimensions " + detail::dims_to_string(dims_));
    }

    static DenseTensor constant(Dims dims, double value) {
        DenseTensor t(std::move(dims));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    const Dims& dims() const noexcept { return dims_; }
    std::size_t order() const noexcept { return dims_.size(); }
    std::size_t size() const noexcept { return data_.size(); }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    double operator[](std::size_t flat) const { return data_[flat]; }
    double& operator[](std::size_t flat) { return data_[flat]; }

    /// Bounds-checked element access by 0-based multi-index.
    double& at(std::span<const std::size_t> multi) { return data_[offset(multi)]; }
    double at(std::span<const std::size_t> multi) const { return data_[offset(multi)]; }
    double& at(std::initializer_list<std::size_t> multi) { return at(std::span<const std::size_t>(multi.begin(), multi.size())); }
    double at(std::initializer_list<std::size_t> multi) const {
        return at(std::span<const std::size_t>(multi.begin(), multi.size()));
    }

    bool same_shape(const DenseTensor& other) const { return dims_ == other.dims_; }

private:
    std::size_t offset(std::span<const std::size_t> multi) const {
        if (multi.size() != dims_.size())
            throw IndexError("multi-index order mismatch");
        std::size_t off = 0, stride = 1;
        for (std::size_t k = 0; k < dims_.size(); ++k) {
            if (multi[k] >= dims_[k])
                throw IndexError("index out of range in mode " + std::to_string(k));
            off += multi[k] * stride;
            stride *= dims_[k];
        }
        return off;
    }

    Dims dims_;
    std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Linear <-> multi-index maps (1-based on both sides).
//
// i = i_1 + sum_{k>=2} (i_k - 1) * prod_{p<k} I_p, a bijection between the
// index box and 1..prod(dims). With column-major storage, i - 1 is exactly
// the flat storage offset.
// ---------------------------------------------------------------------------

inline std::size_t linear_index(std::span<const std::size_t> multi, std::span<const std::size_t> dims) {
    if (multi.size() != dims.size())
        throw IndexError("multi-index order mismatch");
    detail::checked_product(dims);
    std::size_t i = 0, stride = 1;
    for (std::size_t k = 0; k < dims.size(); ++k) {
        if (multi[k] < 1 || multi[k] > dims[k])
            throw IndexError("multi-index component out of range in mode " + std::to_string(k + 1));
        i += (multi[k] - 1) * stride;
        stride *= dims[k];
    }
    return i + 1;
}

inline std::vector<std::size_t> multi_index(std::size_t i, std::span<const std::size_t> dims) {
    const std::size_t total = detail::checked_product(dims);
    if (i < 1 || i > total)
        throw IndexError("linear index out of range");
    std::size_t rem = i - 1;
    std::vector<std::size_t> multi(dims.size());
    for (std::size_t k = 0; k < dims.size(); ++k) {
        multi[k] = rem % dims[k] + 1;
        rem /= dims[k];
    }
    return multi;
}

// ---------------------------------------------------------------------------
// Reshape / permute
// ---------------------------------------------------------------------------

/// Reinterprets the flat data under new dimensions. Total size must agree.
inline DenseTensor reshape(const DenseTensor& t, Dims new_dims) {
    if (detail::checked_product(new_dims) != t.size())
        throw ShapeError("reshape size mismatch: " + detail::dims_to_string(t.dims()) + " -> " +
                         detail::dims_to_string(new_dims));
    return DenseTensor(std::move(new_dims), std::vector<double>(t.values().begin(), t.values().end()));
}

/// General mode permutation; output mode i is input mode perm[i].
inline DenseTensor permute(const DenseTensor& t, std::span<const std::size_t> perm) {
    const std::size_t d = t.order();
    if (perm.size() != d)
        throw ShapeError("permutation order mismatch");
    std::vector<bool> seen(d, false);
    for (std::size_t p : perm) {
        if (p >= d || seen[p])
            throw ShapeError("invalid mode permutation");
        seen[p] = true;
    }
    bool identity = true;
    for (std::size_t k = 0; k < d; ++k)
        identity = identity && perm[k] == k;
    if (identity)
        return t;

    Dims out_dims(d);
    for (std::size_t k = 0; k < d; ++k)
        out_dims[k] = t.dims()[perm[k]];
    DenseTensor out(out_dims);

    // Odometer walk over the output in storage order; the source offset is
    // updated incrementally from the permuted input strides.
    const auto in_strides = detail::strides_of(t.dims());
    std::vector<std::size_t> counter(d, 0);
    std::size_t src = 0;
    const std::size_t n = out.size();
    for (std::size_t dst = 0; dst < n; ++dst) {
        out[dst] = t[src];
        for (std::size_t ax = 0; ax < d; ++ax) {
            ++counter[ax];
            src += in_strides[perm[ax]];
            if (counter[ax] < out_dims[ax])
                break;
            src -= in_strides[perm[ax]] * out_dims[ax];
            counter[ax] = 0;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Contraction
// ---------------------------------------------------------------------------

/// (mode of a, mode of b), 0-based.
using ModePair = std::pair<std::size_t, std::size_t>;

/// Sums a*b over all paired modes. Result carries the free modes of a (in
/// order) followed by the free modes of b; contracting every mode yields a
/// one-entry tensor. An empty pair list is the outer product.
///
/// Internally: permute both operands so the contracted modes are adjacent,
/// then one matrix-matrix multiply on the column-major flat data.
inline DenseTensor contract(const DenseTensor& a, const DenseTensor& b, const std::vector<ModePair>& pairs) {
    const std::size_t da = a.order(), db = b.order();
    std::vector<bool> used_a(da, false), used_b(db, false);
    std::size_t contracted_size = 1;
    for (const auto& [ma, mb] : pairs) {
        if (ma >= da || mb >= db)
            throw ShapeError("contraction mode out of range");
        if (used_a[ma] || used_b[mb])
            throw ShapeError("mode appears in more than one contraction pair");
        if (a.dims()[ma] != b.dims()[mb])
            throw ShapeError("contraction dimension mismatch: a mode " + std::to_string(ma) + " has " +
                             std::to_string(a.dims()[ma]) + ", b mode " + std::to_string(mb) + " has " +
                             std::to_string(b.dims()[mb]));
        used_a[ma] = used_b[mb] = true;
        contracted_size *= a.dims()[ma];
    }

    std::vector<std::size_t> perm_a, perm_b;
    Dims out_dims;
    perm_a.reserve(da);
    perm_b.reserve(db);
    for (std::size_t k = 0; k < da; ++k)
        if (!used_a[k]) {
            perm_a.push_back(k);
            out_dims.push_back(a.dims()[k]);
        }
    for (const auto& [ma, mb] : pairs) {
        perm_a.push_back(ma);
        perm_b.push_back(mb);
    }
    for (std::size_t k = 0; k < db; ++k)
        if (!used_b[k]) {
            perm_b.push_back(k);
            out_dims.push_back(b.dims()[k]);
        }

    const std::size_t rows = a.size() / contracted_size;
    const std::size_t cols = b.size() / contracted_size;
    const bool scalar = out_dims.empty();
    if (scalar)
        out_dims.push_back(1);

    const DenseTensor pa = permute(a, perm_a); // (free_a..., contracted...)
    const DenseTensor pb = permute(b, perm_b); // (contracted..., free_b...)
    DenseTensor out(out_dims);

    using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>; // column-major
    Eigen::Map<const Mat> ma_(pa.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(contracted_size));
    Eigen::Map<const Mat> mb_(pb.data(), static_cast<Eigen::Index>(contracted_size), static_cast<Eigen::Index>(cols));
    Eigen::Map<Mat> mc_(out.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    mc_.noalias() = ma_ * mb_;
    return out;
}

/// Full inner product of two same-shaped tensors.
inline double dot(const DenseTensor& a, const DenseTensor& b) {
    if (!a.same_shape(b))
        throw ShapeError("dot shape mismatch: " + detail::dims_to_string(a.dims()) + " vs " +
                         detail::dims_to_string(b.dims()));
    return std::inner_product(a.values().begin(), a.values().end(), b.values().begin(), 0.0);
}

// ---------------------------------------------------------------------------
// Elementwise operations
// ---------------------------------------------------------------------------

namespace detail {
inline void require_same_shape(const DenseTensor& a, const DenseTensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + " shape mismatch: " + dims_to_string(a.dims()) + " vs " +
                         dims_to_string(b.dims()));
}
} // namespace detail

inline DenseTensor add(const DenseTensor& a, const DenseTensor& b) {
    detail::require_same_shape(a, b, "add");
    DenseTensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] += b[i];
    return out;
}

inline DenseTensor sub(const DenseTensor& a, const DenseTensor& b) {
    detail::require_same_shape(a, b, "sub");
    DenseTensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] -= b[i];
    return out;
}

inline DenseTensor hadamard(const DenseTensor& a, const DenseTensor& b) {
    detail::require_same_shape(a, b, "hadamard");
    DenseTensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] *= b[i];
    return out;
}

inline DenseTensor scale(const DenseTensor& a, double alpha) {
    DenseTensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] *= alpha;
    return out;
}

/// y += alpha * x
inline void axpy(DenseTensor& y, double alpha, const DenseTensor& x) {
    detail::require_same_shape(y, x, "axpy");
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] += alpha * x[i];
}

/// Overflow-safe logistic sigmoid; exact for |x| up to ~700.
inline double sigmoid_scalar(double x) {
    if (x >= 0.0)
        return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline DenseTensor sigmoid(const DenseTensor& a) {
    DenseTensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = sigmoid_scalar(out[i]);
    return out;
}

/// log(1 + e^x) without overflow.
inline double softplus(double x) {
    if (x > 0.0)
        return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

} // namespace tnrbm
