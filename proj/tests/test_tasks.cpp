#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "tnrbm/models.hpp"
#include "tnrbm/mpo.hpp"
#include "tnrbm/rng.hpp"
#include "tnrbm/tasks.hpp"
#include "tnrbm/tensor.hpp"

using namespace tnrbm;

namespace {

ModelParams zero_mporbm(const Dims& visible, const Dims& hidden, const Dims& ranks) {
    return ModelParams::mporbm(Mpo::zeros(visible, hidden, ranks), DenseTensor(visible),
                               DenseTensor(hidden));
}

bool tensors_equal(const DenseTensor& a, const DenseTensor& b) {
    if (a.dims() != b.dims())
        return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.values()[i] != b.values()[i])
            return false;
    return true;
}

} // namespace

TEST_CASE("split_indices partitions the dataset in order", "[tasks]") {
    LabeledDataset ds;
    for (int i = 0; i < 5; ++i) {
        ds.samples.emplace_back(DenseTensor(Dims{2}), LayerRole::Visible);
        ds.labels.push_back(i % 2);
    }
    ds.split = {Split::Train, Split::Test, Split::Train, Split::Validation, Split::Test};
    CHECK(split_indices(ds, Split::Train) == std::vector<std::size_t>{0, 2});
    CHECK(split_indices(ds, Split::Validation) == std::vector<std::size_t>{3});
    CHECK(split_indices(ds, Split::Test) == std::vector<std::size_t>{1, 4});

    ds.split.pop_back();
    CHECK_THROWS_AS(split_indices(ds, Split::Train), ValueError);
}

TEST_CASE("features are flattened hidden probabilities", "[tasks]") {
    ModelParams m = zero_mporbm(Dims{2, 2}, Dims{3, 2}, Dims{1, 1, 1});
    LayerState x(DenseTensor::constant(Dims{2, 2}, 1.0), LayerRole::Visible);
    const DenseTensor f = extract_features(m, x);
    REQUIRE(f.dims() == Dims{6});
    for (double v : f.values())
        CHECK(v == 0.5);

    ModelParams r = ModelParams::random_mporbm(Dims{2, 2}, Dims{3, 2}, Dims{1, 2, 1}, 0.5, 3);
    const DenseTensor g = extract_features(r, x);
    const DenseTensor ph = cond_hidden(r, x);
    for (std::size_t i = 0; i < g.size(); ++i)
        CHECK(g[i] == ph.values()[i]);
}

TEST_CASE("nearest neighbour follows distance then index", "[tasks]") {
    std::vector<DenseTensor> feats{DenseTensor(Dims{1}, {0.0}), DenseTensor(Dims{1}, {1.0}),
                                   DenseTensor(Dims{1}, {1.0})};
    std::vector<int> labels{7, 3, 4};

    CHECK(knn_classify(feats, labels, DenseTensor(Dims{1}, {0.4})) == 7);
    CHECK(knn_classify(feats, labels, DenseTensor(Dims{1}, {0.6})) == 3);
    // exactly equidistant from all of feats[1] and feats[2]: lower index wins
    CHECK(knn_classify(feats, labels, DenseTensor(Dims{1}, {1.0})) == 3);

    std::vector<DenseTensor> none;
    std::vector<int> no_labels;
    CHECK_THROWS_AS(knn_classify(none, no_labels, feats[0]), ValueError);
    CHECK_THROWS_AS(knn_classify(feats, no_labels, feats[0]), ValueError);
    CHECK_THROWS_AS(knn_classify(feats, labels, feats[0], 0), ValueError);
    CHECK_THROWS_AS(knn_classify(feats, labels, DenseTensor(Dims{2})), ShapeError);
}

TEST_CASE("k>1 votes resolve ties toward the best-ranked class", "[tasks]") {
    std::vector<DenseTensor> feats{
        DenseTensor(Dims{1}, {0.1}), DenseTensor(Dims{1}, {0.2}), DenseTensor(Dims{1}, {0.3}),
        DenseTensor(Dims{1}, {0.9})};
    std::vector<int> labels{1, 2, 2, 1};
    // top-3 around 0.0: labels 1,2,2 -> majority 2
    CHECK(knn_classify(feats, labels, DenseTensor(Dims{1}, {0.0}), 3) == 2);
    // top-4: 2-2 tie; best-ranked neighbour has label 1
    CHECK(knn_classify(feats, labels, DenseTensor(Dims{1}, {0.0}), 4) == 1);
    // k beyond the training size degrades to all samples
    CHECK(knn_classify(feats, labels, DenseTensor(Dims{1}, {0.0}), 99) == 1);
}

TEST_CASE("threshold rounds 0.5 up", "[tasks]") {
    DenseTensor p(Dims{4}, {0.0, 0.49, 0.5, 1.0});
    const LayerState s = threshold_layer(p, LayerRole::Visible);
    CHECK(s.values[0] == 0.0);
    CHECK(s.values[1] == 0.0);
    CHECK(s.values[2] == 1.0);
    CHECK(s.values[3] == 1.0);
    DenseTensor bad(Dims{1}, {1.0001});
    CHECK_THROWS_AS(threshold_layer(bad, LayerRole::Visible), ValueError);
}

TEST_CASE("half masks cover the named half", "[tasks]") {
    const DenseTensor left = half_mask(Dims{4, 4}, HalfSide::Left);
    double total = 0.0;
    for (double v : left.values())
        total += v;
    CHECK(total == 8.0);
    CHECK(left.at({0, 0}) == 1.0);
    CHECK(left.at({3, 1}) == 1.0);
    CHECK(left.at({0, 2}) == 0.0);

    const DenseTensor right = half_mask(Dims{4, 4}, HalfSide::Right);
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 4; ++c)
            CHECK(left.at({r, c}) + right.at({r, c}) == 1.0);

    const DenseTensor top = half_mask(Dims{4, 4}, HalfSide::Top);
    CHECK(top.at({1, 3}) == 1.0);
    CHECK(top.at({2, 0}) == 0.0);

    // odd extent: the split line sits at floor(3/2) = 1
    const DenseTensor odd = half_mask(Dims{3, 3}, HalfSide::Left);
    double odd_total = 0.0;
    for (double v : odd.values())
        odd_total += v;
    CHECK(odd_total == 3.0);

    CHECK_THROWS_AS(half_mask(Dims{4}, HalfSide::Left), ShapeError);
}

TEST_CASE("completion clamps observed pixels and validates inputs", "[tasks]") {
    ModelParams m = zero_mporbm(Dims{2, 2}, Dims{2, 1}, Dims{1, 1, 1});
    Rng rng(5);
    LayerState x(DenseTensor(Dims{2, 2}), LayerRole::Visible);

    CompletionTask task;
    task.mask = half_mask(Dims{2, 2}, HalfSide::Left);
    task.gibbs_rounds = 3;

    // zero model: every visible probability is 0.5, so thresholding fills
    // the hidden half with ones while the observed half stays zero.
    const LayerState done = complete(m, x, task, rng);
    CHECK(done.values.at({0, 0}) == 0.0);
    CHECK(done.values.at({1, 0}) == 0.0);
    CHECK(done.values.at({0, 1}) == 1.0);
    CHECK(done.values.at({1, 1}) == 1.0);

    // the final-sample readout still honours the clamp
    task.readout = Readout::FinalSample;
    Rng r2(6);
    const LayerState sampled = complete(m, x, task, r2);
    CHECK(sampled.values.at({0, 0}) == 0.0);
    CHECK(sampled.values.at({1, 0}) == 0.0);

    Rng r3(7), r4(7);
    task.readout = Readout::ThresholdProbability;
    CHECK(tensors_equal(complete(m, x, task, r3).values, complete(m, x, task, r4).values));

    CompletionTask bad = task;
    bad.mask = DenseTensor::constant(Dims{2, 2}, 1.0);
    CHECK_THROWS_AS(complete(m, x, bad, rng), ValueError);
    bad.mask = DenseTensor(Dims{2, 2});
    CHECK_THROWS_AS(complete(m, x, bad, rng), ValueError);
    bad.mask = DenseTensor::constant(Dims{2, 2}, 0.5);
    CHECK_THROWS_AS(complete(m, x, bad, rng), ValueError);
    bad.mask = DenseTensor(Dims{4});
    CHECK_THROWS_AS(complete(m, x, bad, rng), ShapeError);
    bad = task;
    bad.gibbs_rounds = 0;
    CHECK_THROWS_AS(complete(m, x, bad, rng), ValueError);
}

TEST_CASE("a well-trained clamp recovers the compatible mode", "[tasks]") {
    // Hand-built rank-1 model with one hidden unit strongly tied to the
    // all-ones image: observing a half selects the matching mode.
    const Dims vis{2, 2};
    std::vector<DenseTensor> cores;
    cores.push_back(DenseTensor::constant(Dims{1, 2, 1, 1}, 2.0));
    cores.push_back(DenseTensor::constant(Dims{1, 2, 1, 1}, 2.0));
    ModelParams m = ModelParams::mporbm(Mpo(cores), DenseTensor::constant(vis, -2.0),
                                        DenseTensor::constant(Dims{1, 1}, -6.0));

    CompletionTask task;
    task.mask = half_mask(vis, HalfSide::Left);
    task.gibbs_rounds = 50;
    Rng rng(11);
    LayerState ones(DenseTensor::constant(vis, 1.0), LayerRole::Visible);
    const LayerState filled = complete(m, ones, task, rng);
    for (double v : filled.values.values())
        CHECK(v == 1.0);
}

TEST_CASE("salt-and-pepper flips exactly the requested fraction", "[tasks]") {
    Rng rng(21);
    LayerState x(DenseTensor(Dims{28, 28}), LayerRole::Visible);

    const LayerState untouched = add_salt_pepper(x, 0.0, rng);
    CHECK(tensors_equal(untouched.values, x.values));

    Rng r1(3), r2(3);
    const LayerState a = add_salt_pepper(x, 0.1, r1);
    const LayerState b = add_salt_pepper(x, 0.1, r2);
    CHECK(tensors_equal(a.values, b.values));

    // floor(0.1 * 784) = 78 positions receive fair coins; from all-zeros
    // the number of ones is binomial(78, 1/2) -- always within [0, 78].
    std::size_t ones = 0;
    for (double v : a.values.values())
        ones += v == 1.0;
    CHECK(ones <= 78);
    CHECK(ones >= 20); // P(< 20) ~ 4e-6; fixed seed makes this exact anyway

    Rng r3(4);
    const LayerState all = add_salt_pepper(x, 1.0, r3);
    for (double v : all.values.values())
        CHECK((v == 0.0 || v == 1.0));

    CHECK_THROWS_AS(add_salt_pepper(x, -0.1, rng), ValueError);
    CHECK_THROWS_AS(add_salt_pepper(x, 1.5, rng), ValueError);
}

TEST_CASE("denoising thresholds the final visible probabilities", "[tasks]") {
    ModelParams m = zero_mporbm(Dims{2, 2}, Dims{2, 1}, Dims{1, 1, 1});
    Rng rng(9);
    LayerState noisy(DenseTensor(Dims{2, 2}, {1.0, 0.0, 1.0, 0.0}), LayerRole::Visible);
    const LayerState out = denoise(m, noisy, 2, rng);
    for (double v : out.values.values())
        CHECK(v == 1.0); // zero model: p = 0.5 everywhere, rounds up

    Rng r1(13), r2(13);
    ModelParams r = ModelParams::random_mporbm(Dims{2, 2}, Dims{2, 1}, Dims{1, 2, 1}, 0.4, 2);
    CHECK(tensors_equal(denoise(r, noisy, 5, r1).values, denoise(r, noisy, 5, r2).values));

    CHECK_THROWS_AS(denoise(m, noisy, 0, rng), ValueError);
}

TEST_CASE("psnr of binary images", "[tasks]") {
    LayerState ref(DenseTensor(Dims{10, 10}), LayerRole::Visible);
    LayerState same(DenseTensor(Dims{10, 10}), LayerRole::Visible);
    CHECK(std::isinf(psnr(ref, same)));
    CHECK(psnr(ref, same) > 0.0);

    // 10 of 100 pixels differ: MSE = 0.1, PSNR = 10 dB on the nose
    DenseTensor t(Dims{10, 10});
    for (std::size_t i = 0; i < 10; ++i)
        t[i] = 1.0;
    LayerState cand(t, LayerRole::Visible);
    CHECK(psnr(ref, cand) == Catch::Approx(10.0).margin(1e-9));
    CHECK(psnr(cand, ref) == psnr(ref, cand));

    LayerState inverted(DenseTensor::constant(Dims{10, 10}, 1.0), LayerRole::Visible);
    CHECK(psnr(ref, inverted) == Catch::Approx(0.0).margin(1e-12));

    LayerState other(DenseTensor(Dims{5}), LayerRole::Visible);
    CHECK_THROWS_AS(psnr(ref, other), ShapeError);
}
