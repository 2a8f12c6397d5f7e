#pragma once

#include <chrono>
#include <cstdint>
#include <exception>
#include <optional>
#include <thread>
#include <utility>
#include <vector>

#include "tnrbm/models.hpp"
#include "tnrbm/mpo.hpp"
#include "tnrbm/rng.hpp"
#include "tnrbm/tensor.hpp"

namespace tnrbm {

enum class TrainAlgorithm {
    CdAop, ///< alternating optimization: one core updated per pass, fresh chains each pass
    CdSu   ///< simultaneous update: all parameters from one Gibbs pass per batch
};

struct TrainConfig {
    std::size_t max_iterations = 100; ///< epochs T
    std::size_t batch_size = 20;      ///< b
    double momentum = 0.5;            ///< gamma
    double learning_rate = 0.01;      ///< alpha
    std::size_t cd_steps = 1;         ///< K
    TrainAlgorithm algorithm = TrainAlgorithm::CdAop;
    std::uint64_t seed = 0;
    /// Candidate rates for validation selection; empty means the default
    /// grid {0.5, 0.1, 0.05, 0.01} when a validation set is supplied.
    std::vector<double> learning_rate_grid;
    /// Faithful schedule updates B and C inside the per-core loop (d times
    /// per batch); set false to hoist them to once per batch for ablation.
    bool bias_update_in_core_loop = true;
    std::size_t threads = 1;
};

/// One CD chain: V_0..V_K and H_0..H_{K-1} binary states plus every
/// conditional-probability tensor along the way. hidden_probs has K+1
/// entries (P(H|V_K) is needed by the negative phase but never sampled).
struct GibbsChain {
    std::vector<LayerState> visible;
    std::vector<LayerState> hidden;
    std::vector<DenseTensor> hidden_probs;
    std::vector<DenseTensor> visible_probs;
};

/// Per-parameter increments, shapes mirroring ModelParams: one weight block
/// for rbm, two for mvrbm, d core blocks for mporbm.
struct GradientSet {
    std::vector<DenseTensor> weights;
    DenseTensor visible_bias, hidden_bias;

    static GradientSet zeros_like(const ModelParams& m) {
        std::vector<DenseTensor> w;
        switch (m.variant()) {
        case ModelVariant::Rbm:
            w.emplace_back(m.rbm_weights().dims());
            break;
        case ModelVariant::Mvrbm:
            w.emplace_back(m.mv_weights().mode1.dims());
            w.emplace_back(m.mv_weights().mode2.dims());
            break;
        case ModelVariant::Mporbm:
            for (std::size_t k = 0; k < m.mpo_weights().order(); ++k)
                w.emplace_back(m.mpo_weights().core(k).dims());
            break;
        }
        return {std::move(w), DenseTensor(m.visible_dims()), DenseTensor(m.hidden_dims())};
    }
};

struct TrainLogEntry {
    std::size_t epoch = 0, batch = 0; // both 1-based
    double recon_error = 0.0;         // batch-mean ||V0 - P(V|H0)||^2 / size
    double wall_ms = 0.0;             // wall time spent on this batch
};

struct TrainLog {
    std::vector<TrainLogEntry> entries;
    double chosen_learning_rate = 0.0;
    /// (rate, validation metric) per grid candidate when selection ran.
    std::vector<std::pair<double, double>> grid_validation;
};

/// Runs K alternating Gibbs steps from v0, retaining states and probability
/// tensors. Consumes rng draws in a fixed order (H then V per step), so a
/// fixed seed gives a bit-identical chain.
inline GibbsChain run_gibbs(const ModelParams& m, const LayerState& v0, std::size_t K, Rng& rng) {
    if (K < 1)
        throw ValueError("cd_steps must be at least 1");
    detail::layer_values(m, v0, LayerRole::Visible);
    GibbsChain chain;
    chain.visible.reserve(K + 1);
    chain.hidden.reserve(K);
    chain.hidden_probs.reserve(K + 1);
    chain.visible_probs.reserve(K);
    chain.visible.push_back(v0);
    for (std::size_t k = 0; k < K; ++k) {
        chain.hidden_probs.push_back(cond_hidden(m, chain.visible.back()));
        chain.hidden.push_back(sample_layer(chain.hidden_probs.back(), LayerRole::Hidden, rng));
        chain.visible_probs.push_back(cond_visible(m, chain.hidden.back()));
        chain.visible.push_back(sample_layer(chain.visible_probs.back(), LayerRole::Visible, rng));
    }
    chain.hidden_probs.push_back(cond_hidden(m, chain.visible.back()));
    return chain;
}

/// Gradient of -E(v, h) with respect to every parameter block, evaluated at
/// a binary visible tensor and the conditional hidden expectation p (the
/// exact E_{H|V} since E is multilinear in H). Building block of both the
/// CD gradient and the exact log-likelihood gradient.
inline GradientSet negative_energy_gradient(const ModelParams& m, const DenseTensor& v,
                                            const DenseTensor& p) {
    GradientSet g{{}, v, p};
    switch (m.variant()) {
    case ModelVariant::Rbm:
        g.weights.push_back(contract(v, p, {})); // outer product v p^T
        break;
    case ModelVariant::Mvrbm: {
        const auto& w = m.mv_weights();
        DenseTensor t1 = contract(v, w.mode2, {{1, 0}});  // (M1, N2)
        g.weights.push_back(contract(t1, p, {{1, 1}}));   // (M1, N1)
        DenseTensor t2 = contract(v, w.mode1, {{0, 0}});  // (M2, N1)
        g.weights.push_back(contract(t2, p, {{1, 0}}));   // (M2, N2)
        break;
    }
    case ModelVariant::Mporbm:
        for (std::size_t k = 0; k < m.mpo_weights().order(); ++k)
            g.weights.push_back(gradient_environment(m.mpo_weights(), v, p, k));
        break;
    }
    return g;
}

/// Positive minus negative phase for one MPO-core, both phases using the
/// conditional hidden probability tensors.
inline DenseTensor core_gradient(const ModelParams& m, const GibbsChain& chain, std::size_t k) {
    if (m.variant() != ModelVariant::Mporbm)
        throw ValueError("core_gradient requires an mporbm model");
    const DenseTensor pos =
        gradient_environment(m.mpo_weights(), chain.visible.front().values, chain.hidden_probs.front(), k);
    const DenseTensor neg =
        gradient_environment(m.mpo_weights(), chain.visible.back().values, chain.hidden_probs.back(), k);
    return sub(pos, neg);
}

/// (dLL/dB, dLL/dC) estimates from one chain: V_0 - V_K on binary states,
/// P(H|V_0) - P(H|V_K) on probability tensors.
inline std::pair<DenseTensor, DenseTensor> bias_gradients(const GibbsChain& chain) {
    return {sub(chain.visible.front().values, chain.visible.back().values),
            sub(chain.hidden_probs.front(), chain.hidden_probs.back())};
}

/// Full CD gradient from one chain: every weight block plus both biases.
inline GradientSet cd_gradient(const ModelParams& m, const GibbsChain& chain) {
    GradientSet pos =
        negative_energy_gradient(m, chain.visible.front().values, chain.hidden_probs.front());
    const GradientSet neg =
        negative_energy_gradient(m, chain.visible.back().values, chain.hidden_probs.back());
    for (std::size_t j = 0; j < pos.weights.size(); ++j)
        axpy(pos.weights[j], -1.0, neg.weights[j]);
    axpy(pos.visible_bias, -1.0, neg.visible_bias);
    axpy(pos.hidden_bias, -1.0, neg.hidden_bias);
    return pos;
}

/// Analytic gradient of exact_log_likelihood (total over `data`): data
/// expectation minus model expectation of the negative-energy gradient,
/// model side by exhaustive visible enumeration. Test oracle only.
inline GradientSet exact_log_likelihood_gradient(const ModelParams& m,
                                                 const std::vector<LayerState>& data,
                                                 std::size_t max_state_bits = 24) {
    const std::size_t mbits = m.visible_size(), nbits = m.hidden_size();
    if (mbits + nbits > max_state_bits)
        throw TooLargeError("state space exceeds the enumeration cap");
    if (data.empty())
        throw ValueError("dataset is empty");

    GradientSet acc = GradientSet::zeros_like(m);
    auto accumulate = [&](const DenseTensor& v, double weight) {
        const GradientSet g = negative_energy_gradient(m, v, sigmoid(hidden_preactivation(m, v)));
        for (std::size_t j = 0; j < acc.weights.size(); ++j)
            axpy(acc.weights[j], weight, g.weights[j]);
        axpy(acc.visible_bias, weight, g.visible_bias);
        axpy(acc.hidden_bias, weight, g.hidden_bias);
    };

    for (const auto& s : data)
        accumulate(detail::layer_values(m, s, LayerRole::Visible), 1.0);

    std::vector<double> logw;
    logw.reserve(std::size_t{1} << mbits);
    for (std::uint64_t code = 0; code < (std::uint64_t{1} << mbits); ++code)
        logw.push_back(
            log_unnormalized_marginal(m, detail::visible_from_code(m.visible_dims(), mbits, code)));
    const double log_z = detail::log_sum_exp(logw);
    const double n = static_cast<double>(data.size());
    for (std::uint64_t code = 0; code < (std::uint64_t{1} << mbits); ++code)
        accumulate(detail::visible_from_code(m.visible_dims(), mbits, code),
                   -n * std::exp(logw[code] - log_z));
    return acc;
}

/// ||v0 - reconstruction||^2 / visible size.
inline double reconstruction_error(const DenseTensor& v0, const DenseTensor& recon) {
    if (!v0.same_shape(recon))
        throw ShapeError("reconstruction shape mismatch");
    double acc = 0.0;
    auto a = v0.values();
    auto b = recon.values();
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

/// Deterministic mean-field reconstruction error over a dataset: hidden
/// probabilities from each sample, pushed back through the visible
/// conditional without sampling. Used as the validation metric for
/// learning-rate selection.
inline double mean_reconstruction_error(const ModelParams& m, const std::vector<LayerState>& data) {
    if (data.empty())
        throw ValueError("dataset is empty");
    double acc = 0.0;
    for (const auto& s : data) {
        const DenseTensor ph = cond_hidden(m, s);
        const DenseTensor pv = sigmoid(visible_preactivation(m, ph));
        acc += reconstruction_error(s.values, pv);
    }
    return acc / static_cast<double>(data.size());
}

namespace detail {

/// Applies fn(i) for i in [0, n), distributing indices over up to `threads`
/// workers; results land in index order regardless of scheduling. fn must
/// only touch shared state read-only.
template <class F>
auto parallel_map(std::size_t n, std::size_t threads, F&& fn) -> std::vector<decltype(fn(std::size_t{}))> {
    using T = decltype(fn(std::size_t{}));
    std::vector<std::optional<T>> slots(n);
    const std::size_t nw = std::min(std::max<std::size_t>(threads, 1), std::max<std::size_t>(n, 1));
    if (nw <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            slots[i].emplace(fn(i));
    } else {
        std::vector<std::thread> workers;
        std::vector<std::exception_ptr> errors(nw);
        workers.reserve(nw);
        for (std::size_t w = 0; w < nw; ++w)
            workers.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < n; i += nw)
                        slots[i].emplace(fn(i));
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        for (auto& t : workers)
            t.join();
        for (auto& e : errors)
            if (e)
                std::rethrow_exception(e);
    }
    std::vector<T> out;
    out.reserve(n);
    for (auto& s : slots)
        out.push_back(std::move(*s));
    return out;
}

inline void validate_train_config(const TrainConfig& cfg) {
    if (cfg.max_iterations < 1)
        throw ValueError("max_iterations must be at least 1");
    if (cfg.batch_size < 1)
        throw ValueError("batch_size must be at least 1");
    if (cfg.cd_steps < 1)
        throw ValueError("cd_steps must be at least 1");
    if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
        throw ValueError("momentum must lie in [0,1)");
    if (!(cfg.learning_rate >= 0.0)) // 0 is a legal no-op, useful for testing
        throw ValueError("learning_rate must be non-negative");
    for (double r : cfg.learning_rate_grid)
        if (!(r > 0.0))
            throw ValueError("learning_rate_grid entries must be positive");
}

inline std::vector<DenseTensor*> weight_blocks(ModelParams& m) {
    std::vector<DenseTensor*> out;
    switch (m.variant()) {
    case ModelVariant::Rbm:
        out.push_back(&m.rbm_weights());
        break;
    case ModelVariant::Mvrbm:
        out.push_back(&m.mv_weights().mode1);
        out.push_back(&m.mv_weights().mode2);
        break;
    case ModelVariant::Mporbm:
        for (std::size_t k = 0; k < m.mpo_weights().order(); ++k)
            out.push_back(&m.mpo_weights().core(k));
        break;
    }
    return out;
}

/// Momentum step on one block: inc <- gamma*inc + alpha*grad; param += inc.
inline void momentum_apply(DenseTensor& param, DenseTensor& inc, const DenseTensor& grad, double gamma,
                           double alpha) {
    require_same_shape(inc, grad, "momentum");
    for (std::size_t i = 0; i < inc.size(); ++i)
        inc[i] = gamma * inc[i] + alpha * grad[i];
    axpy(param, 1.0, inc);
}

/// Single training run at a fixed learning rate.
inline std::pair<ModelParams, TrainLog> train_single(const ModelParams& initial,
                                                     const std::vector<LayerState>& data,
                                                     const TrainConfig& cfg) {
    using clock = std::chrono::steady_clock;
    ModelParams model = initial;
    for (const auto& s : data)
        layer_values(model, s, LayerRole::Visible);

    GradientSet inc = GradientSet::zeros_like(model);
    TrainLog log;
    log.chosen_learning_rate = cfg.learning_rate;
    const std::size_t n = data.size();
    const std::size_t nbatches = (n + cfg.batch_size - 1) / cfg.batch_size;
    const bool aop = model.variant() == ModelVariant::Mporbm && cfg.algorithm == TrainAlgorithm::CdAop;
    const std::size_t ncores = aop ? model.mpo_weights().order() : 0;
    std::vector<DenseTensor*> blocks = weight_blocks(model);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i)
        order[i] = i;

    for (std::size_t t = 1; t <= cfg.max_iterations; ++t) {
        Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", t));
        shuffle(order, shuffle_rng);
        for (std::size_t b = 0; b < nbatches; ++b) {
            const auto batch_start = clock::now();
            const std::size_t lo = b * cfg.batch_size;
            const std::size_t hi = std::min(lo + cfg.batch_size, n);
            const std::size_t bsz = hi - lo;
            const double inv = 1.0 / static_cast<double>(bsz);
            TrainLogEntry entry;
            entry.epoch = t;
            entry.batch = b + 1;

            auto chains_for_pass = [&](std::size_t pass) {
                return parallel_map(bsz, cfg.threads, [&](std::size_t s) {
                    const std::size_t idx = order[lo + s];
                    Rng rng(derive_seed(cfg.seed, "gibbs", t, b + 1, pass, idx));
                    return run_gibbs(model, data[idx], cfg.cd_steps, rng);
                });
            };
            auto batch_recon = [&](const std::vector<GibbsChain>& chains) {
                double acc = 0.0;
                for (const auto& ch : chains)
                    acc += reconstruction_error(ch.visible.front().values, ch.visible_probs.front());
                return acc * inv;
            };
            auto apply_biases = [&](const std::vector<GibbsChain>& chains) {
                DenseTensor db(model.visible_dims()), dc(model.hidden_dims());
                for (const auto& ch : chains) {
                    auto [gb, gc] = bias_gradients(ch);
                    axpy(db, inv, gb);
                    axpy(dc, inv, gc);
                }
                momentum_apply(model.visible_bias(), inc.visible_bias, db, cfg.momentum,
                               cfg.learning_rate);
                momentum_apply(model.hidden_bias(), inc.hidden_bias, dc, cfg.momentum,
                               cfg.learning_rate);
            };

            if (aop) {
                for (std::size_t c = 0; c < ncores; ++c) {
                    const std::vector<GibbsChain> chains = chains_for_pass(c);
                    if (c == 0)
                        entry.recon_error = batch_recon(chains);
                    const std::vector<DenseTensor> grads =
                        parallel_map(bsz, cfg.threads, [&](std::size_t s) {
                            return core_gradient(model, chains[s], c);
                        });
                    DenseTensor gw(model.mpo_weights().core(c).dims());
                    for (const auto& g : grads)
                        axpy(gw, inv, g);
                    momentum_apply(*blocks[c], inc.weights[c], gw, cfg.momentum, cfg.learning_rate);
                    if (cfg.bias_update_in_core_loop || c + 1 == ncores)
                        apply_biases(chains);
                }
            } else {
                const std::vector<GibbsChain> chains = chains_for_pass(0);
                entry.recon_error = batch_recon(chains);
                const std::vector<GradientSet> grads =
                    parallel_map(bsz, cfg.threads, [&](std::size_t s) {
                        return cd_gradient(model, chains[s]);
                    });
                GradientSet mean = GradientSet::zeros_like(model);
                for (const auto& g : grads) {
                    for (std::size_t j = 0; j < mean.weights.size(); ++j)
                        axpy(mean.weights[j], inv, g.weights[j]);
                    axpy(mean.visible_bias, inv, g.visible_bias);
                    axpy(mean.hidden_bias, inv, g.hidden_bias);
                }
                for (std::size_t j = 0; j < blocks.size(); ++j)
                    momentum_apply(*blocks[j], inc.weights[j], mean.weights[j], cfg.momentum,
                                   cfg.learning_rate);
                momentum_apply(model.visible_bias(), inc.visible_bias, mean.visible_bias, cfg.momentum,
                               cfg.learning_rate);
                momentum_apply(model.hidden_bias(), inc.hidden_bias, mean.hidden_bias, cfg.momentum,
                               cfg.learning_rate);
            }

            entry.wall_ms =
                std::chrono::duration<double, std::milli>(clock::now() - batch_start).count();
            log.entries.push_back(entry);
        }
    }
    return {std::move(model), std::move(log)};
}

} // namespace detail

/// Trains a copy of `initial` on `data`. With a non-empty validation set,
/// trains once per learning rate in the grid (default {0.5, 0.1, 0.05,
/// 0.01}) and keeps the model with the lowest validation reconstruction
/// error; otherwise trains once at cfg.learning_rate.
inline std::pair<ModelParams, TrainLog> train(const ModelParams& initial,
                                              const std::vector<LayerState>& data,
                                              const TrainConfig& cfg,
                                              const std::vector<LayerState>* validation = nullptr) {
    detail::validate_train_config(cfg);
    if (data.empty())
        throw ValueError("dataset is empty");

    if (validation == nullptr || validation->empty())
        return detail::train_single(initial, data, cfg);

    std::vector<double> grid = cfg.learning_rate_grid;
    if (grid.empty())
        grid = {0.5, 0.1, 0.05, 0.01};
    std::optional<std::pair<ModelParams, TrainLog>> best;
    double best_metric = 0.0;
    std::vector<std::pair<double, double>> scores;
    for (double rate : grid) {
        TrainConfig sub = cfg;
        sub.learning_rate = rate;
        sub.learning_rate_grid.clear();
        auto candidate = detail::train_single(initial, data, sub);
        const double metric = mean_reconstruction_error(candidate.first, *validation);
        scores.emplace_back(rate, metric);
        if (!best || metric < best_metric) {
            best = std::move(candidate);
            best_metric = metric;
            best->second.chosen_learning_rate = rate;
        }
    }
    best->second.grid_validation = std::move(scores);
    return std::move(*best);
}

} // namespace tnrbm
