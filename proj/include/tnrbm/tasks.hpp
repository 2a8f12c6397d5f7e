#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "tnrbm/models.hpp"
#include "tnrbm/rng.hpp"
#include "tnrbm/tensor.hpp"

namespace tnrbm {

enum class Split { Train, Validation, Test };

/// Samples with class labels and (after splitting) per-sample split
/// assignments. All three vectors run in parallel.
struct LabeledDataset {
    std::vector<LayerState> samples;
    std::vector<int> labels;
    std::vector<Split> split;
};

/// Indices of the samples assigned to one split, in dataset order.
inline std::vector<std::size_t> split_indices(const LabeledDataset& ds, Split which) {
    if (ds.labels.size() != ds.samples.size() || ds.split.size() != ds.samples.size())
        throw ValueError("dataset fields have mismatched lengths");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < ds.split.size(); ++i)
        if (ds.split[i] == which)
            out.push_back(i);
    return out;
}

/// Hidden probability tensor of x, flattened to a vector in storage order
/// for distance computations.
inline DenseTensor extract_features(const ModelParams& m, const LayerState& x) {
    DenseTensor f = cond_hidden(m, x);
    const std::size_t n = f.size();
    return reshape(f, Dims{n});
}

/// K-nearest-neighbour vote under Euclidean distance. Neighbours are ranked
/// by (distance, training index), so equidistant neighbours resolve to the
/// smallest index; a tied vote among classes resolves to the class of the
/// best-ranked tied neighbour.
inline int knn_classify(const std::vector<DenseTensor>& train_feats, const std::vector<int>& train_labels,
                        const DenseTensor& query, std::size_t k = 1) {
    if (train_feats.empty())
        throw ValueError("knn training set is empty");
    if (train_labels.size() != train_feats.size())
        throw ValueError("feature/label count mismatch");
    if (k < 1)
        throw ValueError("k must be at least 1");
    std::vector<std::pair<double, std::size_t>> ranked;
    ranked.reserve(train_feats.size());
    auto q = query.values();
    for (std::size_t i = 0; i < train_feats.size(); ++i) {
        if (!train_feats[i].same_shape(query))
            throw ShapeError("feature length mismatch");
        auto f = train_feats[i].values();
        double d2 = 0.0;
        for (std::size_t j = 0; j < q.size(); ++j) {
            const double d = f[j] - q[j];
            d2 += d * d;
        }
        ranked.emplace_back(d2, i);
    }
    std::sort(ranked.begin(), ranked.end());
    const std::size_t kk = std::min(k, ranked.size());
    if (kk == 1)
        return train_labels[ranked.front().second];
    std::vector<std::pair<int, std::size_t>> votes; // (label, count)
    for (std::size_t r = 0; r < kk; ++r) {
        const int label = train_labels[ranked[r].second];
        auto it = std::find_if(votes.begin(), votes.end(), [&](const auto& v) { return v.first == label; });
        if (it == votes.end())
            votes.emplace_back(label, 1); // insertion order = best-rank order
        else
            ++it->second;
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < votes.size(); ++i)
        if (votes[i].second > votes[best].second)
            best = i;
    return votes[best].first;
}

/// Binary readout of a probability tensor: 1 where p >= 0.5 (ties round up).
inline LayerState threshold_layer(const DenseTensor& probs, LayerRole role) {
    DenseTensor out(probs.dims());
    auto src = probs.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (!(src[i] >= 0.0 && src[i] <= 1.0))
            throw ValueError("probability out of [0,1]");
        dst[i] = src[i] >= 0.5 ? 1.0 : 0.0;
    }
    return LayerState(std::move(out), role);
}

enum class Readout { ThresholdProbability, FinalSample };

struct CompletionTask {
    DenseTensor mask{Dims{1}};     ///< over visible dims, 1 = observed pixel
    std::size_t gibbs_rounds = 100;
    Readout readout = Readout::ThresholdProbability;
};

enum class HalfSide { Left, Right, Top, Bottom };

/// Mask over a 2-way image (mode 0 = row, mode 1 = column) whose named
/// half is observed; the split line sits at floor(extent/2).
inline DenseTensor half_mask(const Dims& dims, HalfSide side) {
    if (dims.size() != 2)
        throw ShapeError("half_mask expects a 2-way image shape");
    const std::size_t rows = dims[0], cols = dims[1];
    DenseTensor mask(dims);
    for (std::size_t c = 0; c < cols; ++c)
        for (std::size_t r = 0; r < rows; ++r) {
            const bool obs = side == HalfSide::Left    ? c < cols / 2
                             : side == HalfSide::Right ? c >= cols / 2
                             : side == HalfSide::Top   ? r < rows / 2
                                                       : r >= rows / 2;
            mask.at({r, c}) = obs ? 1.0 : 0.0;
        }
    return mask;
}

/// Clamped Gibbs completion: masked pixels start as fair coin flips, each
/// round samples H then V and re-clamps the observed pixels. Readout either
/// thresholds the final visible probabilities (observed pixels passed
/// through) or returns the final clamped sample.
inline LayerState complete(const ModelParams& m, const LayerState& x_observed, const CompletionTask& task,
                           Rng& rng) {
    const DenseTensor& x = detail::layer_values(m, x_observed, LayerRole::Visible);
    if (task.mask.dims() != m.visible_dims())
        throw ShapeError("mask dims do not match visible dims");
    if (task.gibbs_rounds < 1)
        throw ValueError("gibbs_rounds must be at least 1");
    auto mk = task.mask.values();
    std::size_t observed = 0;
    for (double v : mk) {
        if (v != 0.0 && v != 1.0)
            throw ValueError("mask entries must be binary");
        observed += v == 1.0;
    }
    if (observed == 0 || observed == mk.size())
        throw ValueError("mask must leave some pixels observed and some to complete");

    DenseTensor v(x.dims());
    {
        auto out = v.values();
        auto src = x.values();
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = mk[i] == 1.0 ? src[i] : (rng.bernoulli(0.5) ? 1.0 : 0.0);
    }
    auto clamp = [&](DenseTensor& t) {
        auto out = t.values();
        auto src = x.values();
        for (std::size_t i = 0; i < out.size(); ++i)
            if (mk[i] == 1.0)
                out[i] = src[i];
    };

    DenseTensor pv(v.dims());
    for (std::size_t round = 0; round < task.gibbs_rounds; ++round) {
        const DenseTensor ph = cond_hidden(m, LayerState(v, LayerRole::Visible));
        const LayerState h = sample_layer(ph, LayerRole::Hidden, rng);
        pv = cond_visible(m, h);
        v = sample_layer(pv, LayerRole::Visible, rng).values;
        clamp(v);
    }

    if (task.readout == Readout::FinalSample)
        return LayerState(std::move(v), LayerRole::Visible);
    DenseTensor out = threshold_layer(pv, LayerRole::Visible).values;
    clamp(out);
    return LayerState(std::move(out), LayerRole::Visible);
}

/// Flips floor(p * size) distinct pixels, chosen uniformly, each to an
/// independent fair coin.
inline LayerState add_salt_pepper(const LayerState& x, double p, Rng& rng) {
    if (!(p >= 0.0 && p <= 1.0))
        throw ValueError("noise fraction must lie in [0,1]");
    const std::size_t n = x.values.size();
    const auto count = static_cast<std::size_t>(std::floor(p * static_cast<double>(n)));
    DenseTensor out = x.values;
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i)
        idx[i] = i;
    auto data = out.values();
    for (std::size_t j = 0; j < count; ++j) {
        const std::size_t r = j + static_cast<std::size_t>(rng.below(n - j));
        std::swap(idx[j], idx[r]);
        data[idx[j]] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
    return LayerState(std::move(out), x.role);
}

/// Unclamped Gibbs denoising from the noisy image; returns the thresholded
/// final visible probabilities.
inline LayerState denoise(const ModelParams& m, const LayerState& x_noisy, std::size_t rounds, Rng& rng) {
    detail::layer_values(m, x_noisy, LayerRole::Visible);
    if (rounds < 1)
        throw ValueError("rounds must be at least 1");
    LayerState v = x_noisy;
    DenseTensor pv(v.values.dims());
    for (std::size_t round = 0; round < rounds; ++round) {
        const DenseTensor ph = cond_hidden(m, v);
        const LayerState h = sample_layer(ph, LayerRole::Hidden, rng);
        pv = cond_visible(m, h);
        v = sample_layer(pv, LayerRole::Visible, rng);
    }
    return threshold_layer(pv, LayerRole::Visible);
}

/// Peak signal-to-noise ratio in dB for binary images (MAX = 1):
/// 10*log10(1/MSE), +inf when the images agree exactly.
inline double psnr(const LayerState& reference, const LayerState& candidate) {
    if (!reference.values.same_shape(candidate.values))
        throw ShapeError("psnr operands must share dims");
    auto a = reference.values.values();
    auto b = candidate.values.values();
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    const double mse = acc / static_cast<double>(a.size());
    if (mse == 0.0)
        return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

} // namespace tnrbm
