#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "tnrbm/mpo.hpp"
#include "tnrbm/rng.hpp"
#include "tnrbm/tensor.hpp"

namespace tnrbm {

enum class ModelVariant { Rbm, Mvrbm, Mporbm };

enum class LayerRole { Visible, Hidden };

/// Binary configuration of one layer. Construction rejects non-binary
/// entries so downstream energy/gradient code can rely on {0,1} values.
struct LayerState {
    DenseTensor values;
    LayerRole role;

    LayerState(DenseTensor v, LayerRole r) : values(std::move(v)), role(r) {
        for (double x : values.values())
            if (x != 0.0 && x != 1.0)
                throw ValueError("layer entries must be binary");
    }
};

/// MvRBM weights: one matrix per mode, W1 of shape (M1, N1) and W2 of
/// shape (M2, N2), acting on matrix-shaped layers as W1^T V W2.
struct MvWeights {
    DenseTensor mode1, mode2;
};

/// Full parameter set Theta of one model: variant tag, weights, and the
/// visible/hidden bias tensors (whose dims define the layer shapes).
class ModelParams {
public:
    static ModelParams rbm(DenseTensor w, DenseTensor b, DenseTensor c) {
        if (b.order() != 1 || c.order() != 1)
            throw ShapeError("rbm layers must be vectors");
        if (w.order() != 2 || w.dims()[0] != b.dims()[0] || w.dims()[1] != c.dims()[0])
            throw ShapeError("rbm weight matrix must be (visible x hidden)");
        return ModelParams(ModelVariant::Rbm, std::move(w), std::move(b), std::move(c));
    }

    static ModelParams mvrbm(DenseTensor w1, DenseTensor w2, DenseTensor b, DenseTensor c) {
        if (b.order() != 2 || c.order() != 2)
            throw ShapeError("mvrbm layers must be matrices");
        if (w1.order() != 2 || w2.order() != 2 || w1.dims()[0] != b.dims()[0] ||
            w2.dims()[0] != b.dims()[1] || w1.dims()[1] != c.dims()[0] || w2.dims()[1] != c.dims()[1])
            throw ShapeError("mvrbm weight matrices must be (M1 x N1) and (M2 x N2)");
        return ModelParams(ModelVariant::Mvrbm, MvWeights{std::move(w1), std::move(w2)}, std::move(b),
                           std::move(c));
    }

    static ModelParams mporbm(Mpo w, DenseTensor b, DenseTensor c) {
        if (w.in_dims() != b.dims() || w.out_dims() != c.dims())
            throw ShapeError("mpo in/out dims must match the bias tensors");
        return ModelParams(ModelVariant::Mporbm, std::move(w), std::move(b), std::move(c));
    }

    static ModelParams random_rbm(std::size_t visible, std::size_t hidden, double scale,
                                  std::uint64_t seed) {
        DenseTensor w(Dims{visible, hidden});
        Rng rng(derive_seed(seed, "rbm-init"));
        for (double& x : w.values())
            x = rng.gaussian(scale);
        return rbm(std::move(w), DenseTensor(Dims{visible}), DenseTensor(Dims{hidden}));
    }

    static ModelParams random_mvrbm(const Dims& visible, const Dims& hidden, double scale,
                                    std::uint64_t seed) {
        if (visible.size() != 2 || hidden.size() != 2)
            throw ShapeError("mvrbm layers must be matrices");
        DenseTensor w1(Dims{visible[0], hidden[0]});
        DenseTensor w2(Dims{visible[1], hidden[1]});
        Rng rng(derive_seed(seed, "mvrbm-init"));
        for (double& x : w1.values())
            x = rng.gaussian(scale);
        for (double& x : w2.values())
            x = rng.gaussian(scale);
        return mvrbm(std::move(w1), std::move(w2), DenseTensor(visible), DenseTensor(hidden));
    }

    static ModelParams random_mporbm(const Dims& visible, const Dims& hidden, const Dims& ranks,
                                     double scale, std::uint64_t seed) {
        return mporbm(Mpo::random(visible, hidden, ranks, scale, seed), DenseTensor(visible),
                      DenseTensor(hidden));
    }

    ModelVariant variant() const noexcept { return variant_; }
    const Dims& visible_dims() const noexcept { return visible_bias_.dims(); }
    const Dims& hidden_dims() const noexcept { return hidden_bias_.dims(); }
    std::size_t visible_size() const noexcept { return visible_bias_.size(); }
    std::size_t hidden_size() const noexcept { return hidden_bias_.size(); }

    const DenseTensor& visible_bias() const noexcept { return visible_bias_; }
    DenseTensor& visible_bias() noexcept { return visible_bias_; }
    const DenseTensor& hidden_bias() const noexcept { return hidden_bias_; }
    DenseTensor& hidden_bias() noexcept { return hidden_bias_; }

    const DenseTensor& rbm_weights() const { return expect<DenseTensor>("rbm"); }
    DenseTensor& rbm_weights() { return expect<DenseTensor>("rbm"); }
    const MvWeights& mv_weights() const { return expect<MvWeights>("mvrbm"); }
    MvWeights& mv_weights() { return expect<MvWeights>("mvrbm"); }
    const Mpo& mpo_weights() const { return expect<Mpo>("mporbm"); }
    Mpo& mpo_weights() { return expect<Mpo>("mporbm"); }

    /// Stored weight entries, excluding biases: M*N for rbm, M1*N1 + M2*N2
    /// for mvrbm, sum of core sizes for mporbm.
    std::size_t weight_parameter_count() const {
        switch (variant_) {
        case ModelVariant::Rbm:
            return rbm_weights().size();
        case ModelVariant::Mvrbm:
            return mv_weights().mode1.size() + mv_weights().mode2.size();
        case ModelVariant::Mporbm:
            return mpo_weights().parameter_count();
        }
        throw Error("internal: unknown variant");
    }

private:
    template <class T>
    ModelParams(ModelVariant v, T w, DenseTensor b, DenseTensor c)
        : variant_(v), weights_(std::move(w)), visible_bias_(std::move(b)), hidden_bias_(std::move(c)) {}

    template <class T>
    const T& expect(const char* name) const {
        if (const T* p = std::get_if<T>(&weights_))
            return *p;
        throw ValueError(std::string("model is not a ") + name);
    }
    template <class T>
    T& expect(const char* name) {
        if (T* p = std::get_if<T>(&weights_))
            return *p;
        throw ValueError(std::string("model is not a ") + name);
    }

    ModelVariant variant_;
    std::variant<DenseTensor, MvWeights, Mpo> weights_;
    DenseTensor visible_bias_, hidden_bias_;
};

namespace detail {

inline const DenseTensor& layer_values(const ModelParams& m, const LayerState& s, LayerRole want) {
    if (s.role != want)
        throw ValueError("layer has the wrong role for this operation");
    const Dims& expect = want == LayerRole::Visible ? m.visible_dims() : m.hidden_dims();
    if (s.values.dims() != expect)
        throw ShapeError("layer dims " + dims_to_string(s.values.dims()) + " do not match model " +
                         dims_to_string(expect));
    return s.values;
}

} // namespace detail

/// Hidden-layer pre-activation W^T v + C (generalized per variant); the
/// argument of the sigmoid in p(H=1|V).
inline DenseTensor hidden_preactivation(const ModelParams& m, const DenseTensor& v) {
    if (v.dims() != m.visible_dims())
        throw ShapeError("visible tensor dims do not match model");
    DenseTensor pre = [&] {
        switch (m.variant()) {
        case ModelVariant::Rbm:
            return contract(m.rbm_weights(), v, {{0, 0}});
        case ModelVariant::Mvrbm: {
            DenseTensor t = contract(m.mv_weights().mode1, v, {{0, 0}}); // (N1, M2)
            return contract(t, m.mv_weights().mode2, {{1, 0}});          // (N1, N2)
        }
        case ModelVariant::Mporbm:
            return mpo_times_layer(m.mpo_weights(), v, MpoSide::ContractIn);
        }
        throw Error("internal: unknown variant");
    }();
    axpy(pre, 1.0, m.hidden_bias());
    return pre;
}

/// Visible-layer pre-activation W h + B, the argument of the sigmoid in
/// p(V=1|H).
inline DenseTensor visible_preactivation(const ModelParams& m, const DenseTensor& h) {
    if (h.dims() != m.hidden_dims())
        throw ShapeError("hidden tensor dims do not match model");
    DenseTensor pre = [&] {
        switch (m.variant()) {
        case ModelVariant::Rbm:
            return contract(m.rbm_weights(), h, {{1, 0}});
        case ModelVariant::Mvrbm: {
            DenseTensor t = contract(m.mv_weights().mode1, h, {{1, 0}}); // (M1, N2)
            return contract(t, m.mv_weights().mode2, {{1, 1}});          // (M1, M2)
        }
        case ModelVariant::Mporbm:
            return mpo_times_layer(m.mpo_weights(), h, MpoSide::ContractOut);
        }
        throw Error("internal: unknown variant");
    }();
    axpy(pre, 1.0, m.visible_bias());
    return pre;
}

/// Energy E(v,h) = -(v-W-h contraction) - <v,B> - <h,C>. The weight term is
/// folded into the hidden pre-activation, which is linear in h.
inline double energy(const ModelParams& m, const LayerState& v, const LayerState& h) {
    const DenseTensor& vv = detail::layer_values(m, v, LayerRole::Visible);
    const DenseTensor& hv = detail::layer_values(m, h, LayerRole::Hidden);
    return -dot(vv, m.visible_bias()) - dot(hv, hidden_preactivation(m, vv));
}

/// p(H=1|V), entrywise sigmoid of the hidden pre-activation.
inline DenseTensor cond_hidden(const ModelParams& m, const LayerState& v) {
    return sigmoid(hidden_preactivation(m, detail::layer_values(m, v, LayerRole::Visible)));
}

/// p(V=1|H), entrywise sigmoid of the visible pre-activation.
inline DenseTensor cond_visible(const ModelParams& m, const LayerState& h) {
    return sigmoid(visible_preactivation(m, detail::layer_values(m, h, LayerRole::Hidden)));
}

/// Independent Bernoulli draw per entry; one rng call per unit in storage
/// order, so results are reproducible under a fixed seed.
inline LayerState sample_layer(const DenseTensor& probs, LayerRole role, Rng& rng) {
    DenseTensor out(probs.dims());
    auto src = probs.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (!(src[i] >= 0.0 && src[i] <= 1.0))
            throw ValueError("probability out of [0,1]");
        dst[i] = rng.bernoulli(src[i]) ? 1.0 : 0.0;
    }
    return LayerState(std::move(out), role);
}

/// log sum_H exp(-E(v,H)) — the unnormalized log marginal of a visible
/// configuration. The hidden sum factorizes into softplus terms because E
/// is linear in each hidden unit.
inline double log_unnormalized_marginal(const ModelParams& m, const DenseTensor& v) {
    DenseTensor pre = hidden_preactivation(m, v);
    double acc = dot(v, m.visible_bias());
    for (double x : pre.values())
        acc += softplus(x);
    return acc;
}

namespace detail {

/// Visible configuration with flat index `code`: storage-order unit i holds
/// bit i of code.
inline DenseTensor visible_from_code(const Dims& dims, std::size_t size, std::uint64_t code) {
    DenseTensor v(dims);
    auto out = v.values();
    for (std::size_t i = 0; i < size; ++i)
        out[i] = static_cast<double>((code >> i) & 1u);
    return v;
}

inline double log_sum_exp(const std::vector<double>& xs) {
    double mx = xs.front();
    for (double x : xs)
        mx = std::max(mx, x);
    double s = 0.0;
    for (double x : xs)
        s += std::exp(x - mx);
    return mx + std::log(s);
}

} // namespace detail

/// Exact total log-likelihood of `data` (sum over samples). Enumerates all
/// visible configurations; hidden sums are analytic. Test oracle only —
/// cost is 2^(visible units).
inline double exact_log_likelihood(const ModelParams& m, const std::vector<LayerState>& data,
                                   std::size_t max_state_bits = 24) {
    const std::size_t mbits = m.visible_size(), nbits = m.hidden_size();
    if (mbits + nbits > max_state_bits)
        throw TooLargeError("state space exceeds the enumeration cap");
    if (data.empty())
        throw ValueError("dataset is empty");
    std::vector<double> marginals;
    marginals.reserve(std::size_t{1} << mbits);
    for (std::uint64_t code = 0; code < (std::uint64_t{1} << mbits); ++code)
        marginals.push_back(
            log_unnormalized_marginal(m, detail::visible_from_code(m.visible_dims(), mbits, code)));
    const double log_z = detail::log_sum_exp(marginals);
    double total = 0.0;
    for (const auto& s : data)
        total += log_unnormalized_marginal(m, detail::layer_values(m, s, LayerRole::Visible)) - log_z;
    return total;
}

} // namespace tnrbm
