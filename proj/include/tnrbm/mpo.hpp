#pragma once

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "tnrbm/rng.hpp"
#include "tnrbm/tensor.hpp"

namespace tnrbm {

/// Matrix product operator: a 2d-way weight tensor W(i_1..i_d, j_1..j_d)
/// factored into a chain of 4-way cores, core k of dims (R_k, I_k, J_k,
/// R_{k+1}) with open boundaries R_1 = R_{d+1} = 1. Entries of W are the
/// rank-index sums of products of core entries.
class Mpo {
public:
    explicit Mpo(std::vector<DenseTensor> cores) : cores_(std::move(cores)) {
        if (cores_.empty())
            throw RankError("mpo needs at least one core");
        const std::size_t d = cores_.size();
        ranks_.resize(d + 1);
        in_dims_.resize(d);
        out_dims_.resize(d);
        for (std::size_t k = 0; k < d; ++k) {
            const auto& dims = cores_[k].dims();
            if (dims.size() != 4)
                throw RankError("mpo core " + std::to_string(k) + " is not 4-way");
            if (k == 0)
                ranks_[0] = dims[0];
            else if (dims[0] != ranks_[k])
                throw RankError("rank mismatch between cores " + std::to_string(k - 1) + " and " +
                                std::to_string(k));
            in_dims_[k] = dims[1];
            out_dims_[k] = dims[2];
            ranks_[k + 1] = dims[3];
        }
        if (ranks_.front() != 1 || ranks_.back() != 1)
            throw RankError("boundary ranks must be 1 (open boundary conditions)");
        if (ranks_exceed_useful(in_dims_, out_dims_, ranks_))
            std::cerr << "tnrbm: warning: mpo ranks exceed the maximal useful rank for these dimensions\n";
    }

    /// Cores filled with i.i.d. zero-mean Gaussians of standard deviation
    /// `scale`; entry draw order is core 0..d-1, storage order within a core.
    static Mpo random(const Dims& in_dims, const Dims& out_dims, const Dims& ranks, double scale,
                      std::uint64_t seed) {
        std::vector<DenseTensor> cores = shaped_cores(in_dims, out_dims, ranks);
        Rng rng(derive_seed(seed, "mpo-init"));
        for (auto& core : cores)
            for (double& x : core.values())
                x = rng.gaussian(scale);
        return Mpo(std::move(cores));
    }

    static Mpo zeros(const Dims& in_dims, const Dims& out_dims, const Dims& ranks) {
        return Mpo(shaped_cores(in_dims, out_dims, ranks));
    }

    std::size_t order() const noexcept { return cores_.size(); }
    const DenseTensor& core(std::size_t k) const { return cores_.at(k); }
    DenseTensor& core(std::size_t k) { return cores_.at(k); }
    const Dims& in_dims() const noexcept { return in_dims_; }
    const Dims& out_dims() const noexcept { return out_dims_; }
    const Dims& ranks() const noexcept { return ranks_; }

    /// Number of stored weight entries, sum over k of R_k*I_k*J_k*R_{k+1}.
    std::size_t parameter_count() const noexcept {
        std::size_t n = 0;
        for (const auto& c : cores_)
            n += c.size();
        return n;
    }

    /// True when some internal rank exceeds min(prod of I*J left of the cut,
    /// prod right of the cut); such ranks carry no extra expressiveness.
    static bool ranks_exceed_useful(const Dims& in_dims, const Dims& out_dims, const Dims& ranks) {
        const std::size_t d = in_dims.size();
        for (std::size_t k = 1; k < d; ++k) { // internal bond between cores k-1 and k
            std::size_t left = 1, right = 1;
            for (std::size_t p = 0; p < k; ++p)
                left *= in_dims[p] * out_dims[p];
            for (std::size_t p = k; p < d; ++p)
                right *= in_dims[p] * out_dims[p];
            if (ranks[k] > std::min(left, right))
                return true;
        }
        return false;
    }

private:
    static std::vector<DenseTensor> shaped_cores(const Dims& in_dims, const Dims& out_dims, const Dims& ranks) {
        const std::size_t d = in_dims.size();
        if (d == 0 || out_dims.size() != d)
            throw RankError("in/out dimension lists must be non-empty and of equal length");
        if (ranks.size() != d + 1)
            throw RankError("rank vector must have length d+1");
        if (ranks.front() != 1 || ranks.back() != 1)
            throw RankError("boundary ranks must be 1 (open boundary conditions)");
        for (std::size_t r : ranks)
            if (r == 0)
                throw RankError("ranks must be positive");
        std::vector<DenseTensor> cores;
        cores.reserve(d);
        for (std::size_t k = 0; k < d; ++k)
            cores.emplace_back(Dims{ranks[k], in_dims[k], out_dims[k], ranks[k + 1]});
        return cores;
    }

    std::vector<DenseTensor> cores_;
    Dims in_dims_, out_dims_, ranks_;
};

/// Expands the MPO into the full 2d-way tensor, modes (i_1..i_d, j_1..j_d).
/// Under the linear-index map this flat data is the column-major matrix
/// W of shape (prod I_k) x (prod J_k). Intended for small shapes and oracle
/// checks; refuses above `max_entries`.
inline DenseTensor materialize(const Mpo& w, std::size_t max_entries = 100000000) {
    const std::size_t d = w.order();
    std::size_t total = 1;
    for (std::size_t k = 0; k < d; ++k) {
        total *= w.in_dims()[k] * w.out_dims()[k];
        if (total > max_entries)
            throw TooLargeError("materialized mpo would exceed the entry cap");
    }

    // Absorb cores left to right; invariant layout (i_0..i_k, j_0..j_k, r_{k+1}).
    const auto& c0 = w.core(0);
    DenseTensor acc = reshape(c0, Dims{c0.dims()[1], c0.dims()[2], c0.dims()[3]});
    for (std::size_t k = 1; k < d; ++k) {
        const std::size_t last = acc.order() - 1;
        DenseTensor t = contract(acc, w.core(k), {{last, 0}});
        // (i_0..i_{k-1}, j_0..j_{k-1}, i_k, j_k, r) -> interleave i_k, j_k in place
        std::vector<std::size_t> perm;
        perm.reserve(t.order());
        for (std::size_t p = 0; p < k; ++p)
            perm.push_back(p);
        perm.push_back(2 * k);
        for (std::size_t p = 0; p < k; ++p)
            perm.push_back(k + p);
        perm.push_back(2 * k + 1);
        perm.push_back(2 * k + 2);
        acc = permute(t, perm);
    }
    Dims final_dims;
    for (std::size_t k = 0; k < d; ++k)
        final_dims.push_back(w.in_dims()[k]);
    for (std::size_t k = 0; k < d; ++k)
        final_dims.push_back(w.out_dims()[k]);
    return reshape(acc, std::move(final_dims));
}

/// Which layer the MPO is contracted against.
enum class MpoSide {
    ContractOut, ///< x matches out_dims; result over in_dims (W h analogue)
    ContractIn   ///< x matches in_dims; result over out_dims (W^T v analogue)
};

/// Contracts the weight MPO against a layer tensor core by core, never
/// materializing W. Cost is polynomial in d, the mode sizes and the ranks.
inline DenseTensor mpo_times_layer(const Mpo& w, const DenseTensor& x, MpoSide side) {
    const std::size_t d = w.order();
    const Dims& x_dims = side == MpoSide::ContractIn ? w.in_dims() : w.out_dims();
    if (x.dims() != x_dims)
        throw ShapeError("layer dims " + detail::dims_to_string(x.dims()) + " do not match mpo " +
                         detail::dims_to_string(x_dims));
    const std::size_t core_mode = side == MpoSide::ContractIn ? 1 : 2;

    // Layout invariant: (r_k, x_k..x_{d-1}, y_0..y_{k-1}) where y are the
    // produced free modes. Each step contracts core k over (rank, x_k) and
    // cycles the two new core modes to the back.
    Dims adims;
    adims.push_back(1);
    for (std::size_t v : x_dims)
        adims.push_back(v);
    DenseTensor acc = reshape(x, std::move(adims));
    for (std::size_t k = 0; k < d; ++k) {
        DenseTensor t = contract(w.core(k), acc, {{0, 0}, {core_mode, 1}});
        std::vector<std::size_t> perm(t.order());
        for (std::size_t p = 0; p + 1 < t.order(); ++p)
            perm[p] = p + 1;
        perm[t.order() - 1] = 0;
        acc = permute(t, perm);
    }
    const Dims& y_dims = side == MpoSide::ContractIn ? w.out_dims() : w.in_dims();
    return reshape(acc, y_dims);
}

namespace detail {

// Mode bookkeeping for environment contraction: each live mode of the work
// tensor is one edge of the remaining network.
struct EnvMode {
    enum Kind { Rank, Vis, Hid } kind;
    std::size_t pos;
    bool operator==(const EnvMode&) const = default;
};

inline std::size_t env_find(const std::vector<EnvMode>& modes, EnvMode m) {
    for (std::size_t i = 0; i < modes.size(); ++i)
        if (modes[i] == m)
            return i;
    throw Error("internal: environment mode not found");
}

} // namespace detail

/// Derivative of the scalar v-W-h contraction with respect to core k: the
/// 4-way tensor (R_k, I_k, J_k, R_{k+1}) obtained by contracting v, h and
/// every core except core k over all connected edges. Built by absorbing
/// cores left of k (then h), then cores right of k, into a work tensor whose
/// free modes are tracked explicitly.
inline DenseTensor gradient_environment(const Mpo& w, const DenseTensor& v, const DenseTensor& h, std::size_t k) {
    using detail::EnvMode;
    const std::size_t d = w.order();
    if (k >= d)
        throw ValueError("core index out of range");
    if (v.dims() != w.in_dims())
        throw ShapeError("visible layer dims do not match mpo in_dims");
    if (h.dims() != w.out_dims())
        throw ShapeError("hidden layer dims do not match mpo out_dims");

    // Work tensor starts as v with the leading boundary rank edge attached.
    Dims adims;
    adims.push_back(1);
    for (std::size_t x : v.dims())
        adims.push_back(x);
    DenseTensor acc = reshape(v, std::move(adims));
    std::vector<EnvMode> modes;
    modes.push_back({EnvMode::Rank, 0});
    for (std::size_t p = 0; p < d; ++p)
        modes.push_back({EnvMode::Vis, p});
    bool h_absorbed = false;

    auto absorb_h = [&](std::size_t p) {
        // Contract the free hidden edge j_p against h; h's other modes join.
        const std::size_t pos = detail::env_find(modes, {EnvMode::Hid, p});
        acc = contract(acc, h, {{pos, p}});
        modes.erase(modes.begin() + static_cast<std::ptrdiff_t>(pos));
        for (std::size_t q = 0; q < d; ++q)
            if (q != p)
                modes.push_back({EnvMode::Hid, q});
        h_absorbed = true;
    };

    auto absorb_core = [&](std::size_t p, bool from_left) {
        std::vector<ModePair> pairs;
        std::vector<std::size_t> contracted; // positions in `modes`
        auto pair_up = [&](EnvMode m, std::size_t core_mode) {
            const std::size_t pos = detail::env_find(modes, m);
            pairs.push_back({pos, core_mode});
            contracted.push_back(pos);
        };
        pair_up({EnvMode::Rank, from_left ? p : p + 1}, from_left ? 0u : 3u);
        pair_up({EnvMode::Vis, p}, 1);
        if (h_absorbed)
            pair_up({EnvMode::Hid, p}, 2);
        acc = contract(acc, w.core(p), pairs);
        // Free modes of acc keep their order; free core modes append in the
        // core's own mode order (rank_left=0, vis=1, hid=2, rank_right=3).
        std::vector<EnvMode> next;
        for (std::size_t i = 0; i < modes.size(); ++i)
            if (std::find(contracted.begin(), contracted.end(), i) == contracted.end())
                next.push_back(modes[i]);
        if (from_left) {
            if (!h_absorbed)
                next.push_back({EnvMode::Hid, p});
            next.push_back({EnvMode::Rank, p + 1});
        } else {
            next.push_back({EnvMode::Rank, p});
            if (!h_absorbed)
                next.push_back({EnvMode::Hid, p});
        }
        modes = std::move(next);
        if (!h_absorbed)
            absorb_h(p);
    };

    for (std::size_t p = 0; p < k; ++p)
        absorb_core(p, true);

    // Attach the trailing boundary rank edge before sweeping from the right.
    {
        Dims dd = acc.dims();
        dd.push_back(1);
        acc = reshape(acc, std::move(dd));
        modes.push_back({EnvMode::Rank, d});
    }
    for (std::size_t p = d; p-- > k + 1;)
        absorb_core(p, false);

    if (!h_absorbed) { // only possible when d == 1: outer product with h
        acc = contract(acc, h, {});
        for (std::size_t q = 0; q < d; ++q)
            modes.push_back({EnvMode::Hid, q});
    }

    const std::vector<std::size_t> perm = {
        detail::env_find(modes, {EnvMode::Rank, k}),
        detail::env_find(modes, {EnvMode::Vis, k}),
        detail::env_find(modes, {EnvMode::Hid, k}),
        detail::env_find(modes, {EnvMode::Rank, k + 1}),
    };
    return permute(acc, perm);
}

} // namespace tnrbm
