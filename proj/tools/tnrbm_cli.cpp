// Command-line front end: trains RBM/MvRBM/MPORBM models and runs the
// classification, completion, and denoising tasks. Exit codes: 0 success,
// 1 validation/tolerance failure, 2 usage error, 3 I/O or format error.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "tnrbm/tnrbm.hpp"

namespace {

using namespace tnrbm;

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::size_t product(const Dims& dims) {
    std::size_t p = 1;
    for (std::size_t v : dims)
        p *= v;
    return p;
}

// ---------------------------------------------------------------------------
// Shared option bundles

struct DataOptions {
    std::string images;
    std::string labels;
    std::size_t count = 0;     // 0 = all samples in the file
    std::size_t bitplanes = 0; // 0 = binarize instead
    double threshold = 128.0;
};

void add_data_options(CLI::App* cmd, DataOptions& o, bool with_labels, const char* prefix = "") {
    const std::string p(prefix);
    cmd->add_option("--" + p + "images", o.images, "IDX image stack")->required();
    if (with_labels)
        cmd->add_option("--" + p + "labels", o.labels, "IDX label vector")->required();
    cmd->add_option("--" + p + "count", o.count, "limit on samples read (0 = all)")
        ->capture_default_str();
    // Encoding flags are shared by every dataset of a command; only the first
    // dataset registers them, and run_* copies them across before loading.
    if (cmd->get_option_no_throw("--bitplanes") == nullptr) {
        cmd->add_option("--bitplanes", o.bitplanes,
                        "encode pixels as this many bit planes instead of thresholding")
            ->capture_default_str();
        cmd->add_option("--binarize-threshold", o.threshold, "pixel threshold for binarization")
            ->capture_default_str();
    }
}

struct TrainOptions {
    TrainConfig cfg;
    double init_scale = 0.01;
};

void add_train_options(CLI::App* cmd, TrainOptions& o) {
    cmd->add_option("--epochs", o.cfg.max_iterations, "training epochs")->capture_default_str();
    cmd->add_option("--batch-size", o.cfg.batch_size, "minibatch size")->capture_default_str();
    cmd->add_option("--momentum", o.cfg.momentum, "momentum factor")->capture_default_str();
    cmd->add_option("--lr", o.cfg.learning_rate, "learning rate")->capture_default_str();
    cmd->add_option("--lr-grid", o.cfg.learning_rate_grid,
                    "candidate learning rates for validation selection")
        ->delimiter(',');
    cmd->add_option("--cd-steps", o.cfg.cd_steps, "contrastive-divergence steps K")
        ->capture_default_str();
    cmd->add_option("--algorithm", o.cfg.algorithm, "per-core (cd-aop) or simultaneous (cd-su) updates")
        ->transform(CLI::CheckedTransformer(
            std::map<std::string, TrainAlgorithm>{{"cd-aop", TrainAlgorithm::CdAop},
                                                  {"cd-su", TrainAlgorithm::CdSu}}))
        ->capture_default_str();
    cmd->add_flag("!--hoist-bias-updates", o.cfg.bias_update_in_core_loop,
                  "update biases once per batch instead of once per core pass");
    cmd->add_option("--init-scale", o.init_scale, "stddev of the Gaussian weight initialization")
        ->capture_default_str();
}

// ---------------------------------------------------------------------------
// Data loading

std::vector<LayerState> samples_from_stack(const DenseTensor& stack, const DataOptions& o,
                                           const Dims& visible) {
    if (stack.order() < 2)
        throw FormatError("image stack needs a sample mode plus pixel modes");
    std::size_t n = stack.dims()[0];
    if (o.count > 0)
        n = std::min(n, o.count);
    if (n == 0)
        throw ValueError("image stack is empty");
    std::vector<LayerState> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const DenseTensor s = slice_sample(stack, i);
        LayerState enc = o.bitplanes > 0 ? bitplane_encode(s, o.bitplanes) : binarize(s, o.threshold);
        out.emplace_back(reshape(enc.values, visible), LayerRole::Visible);
    }
    return out;
}

std::vector<LayerState> load_samples(const DataOptions& o, const Dims& visible) {
    return samples_from_stack(load_idx(o.images), o, visible);
}

std::vector<int> load_labels(const std::string& path, std::size_t n) {
    const DenseTensor t = load_idx(path);
    if (t.order() != 1)
        throw FormatError("label file must be a 1-way IDX vector");
    if (t.size() < n)
        throw ValueError("label file has fewer entries than samples");
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = static_cast<int>(t.values()[i]);
    return out;
}

/// Natural visible dims of encoded samples; rbm models flatten to a vector.
Dims default_visible(const DenseTensor& stack, std::size_t bitplanes, ModelVariant variant) {
    Dims dims(stack.dims().begin() + 1, stack.dims().end());
    if (bitplanes > 0)
        dims.push_back(bitplanes);
    if (variant == ModelVariant::Rbm)
        return Dims{product(dims)};
    return dims;
}

ModelParams make_model(ModelVariant variant, const Dims& visible, const Dims& hidden, const Dims& ranks,
                       double scale, std::uint64_t seed) {
    switch (variant) {
    case ModelVariant::Rbm:
        if (visible.size() != 1 || hidden.size() != 1)
            throw ShapeError("rbm expects one visible and one hidden dimension");
        return ModelParams::random_rbm(visible[0], hidden[0], scale, seed);
    case ModelVariant::Mvrbm:
        return ModelParams::random_mvrbm(visible, hidden, scale, seed);
    case ModelVariant::Mporbm:
        if (ranks.empty())
            throw ValueError("mporbm requires --ranks");
        return ModelParams::random_mporbm(visible, hidden, ranks, scale, seed);
    }
    throw Error("internal: unknown variant");
}

void write_text_atomic(const std::string& path, const std::string& text) {
    detail::write_file_atomic(path, text);
}

std::string train_log_csv(const TrainLog& log, bool with_timing) {
    std::string csv = with_timing ? "epoch,batch,recon_error,wall_ms\n" : "epoch,batch,recon_error\n";
    for (const auto& e : log.entries) {
        csv += std::to_string(e.epoch) + "," + std::to_string(e.batch) + "," + fmt(e.recon_error);
        if (with_timing)
            csv += "," + fmt(e.wall_ms);
        csv += "\n";
    }
    return csv;
}

double final_epoch_mean_recon(const TrainLog& log) {
    if (log.entries.empty())
        return 0.0;
    const std::size_t last = log.entries.back().epoch;
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& e : log.entries)
        if (e.epoch == last) {
            acc += e.recon_error;
            ++n;
        }
    return acc / static_cast<double>(n);
}

/// Keeps at most `cap` samples of every class, in file order (0 = no cap).
void cap_per_class(std::vector<LayerState>& samples, std::vector<int>& labels, std::size_t cap) {
    if (cap == 0)
        return;
    std::map<int, std::size_t> seen;
    std::vector<LayerState> ks;
    std::vector<int> kl;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (seen[labels[i]]++ < cap) {
            ks.push_back(std::move(samples[i]));
            kl.push_back(labels[i]);
        }
    samples = std::move(ks);
    labels = std::move(kl);
}

double knn_error_rate(const ModelParams& model, const std::vector<LayerState>& train_samples,
                      const std::vector<int>& train_labels, const std::vector<LayerState>& test_samples,
                      const std::vector<int>& test_labels, std::size_t k,
                      std::vector<int>* predictions = nullptr) {
    std::vector<DenseTensor> train_feats;
    train_feats.reserve(train_samples.size());
    for (const auto& s : train_samples)
        train_feats.push_back(extract_features(model, s));
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < test_samples.size(); ++i) {
        const int pred = knn_classify(train_feats, train_labels, extract_features(model, test_samples[i]), k);
        if (predictions)
            predictions->push_back(pred);
        wrong += pred != test_labels[i];
    }
    return static_cast<double>(wrong) / static_cast<double>(test_samples.size());
}

// ---------------------------------------------------------------------------
// Subcommand state

struct Cli {
    std::size_t threads = 1;

    // train / rank-sweep model construction
    ModelVariant variant = ModelVariant::Mporbm;
    Dims visible, hidden, ranks;
    TrainOptions train;
    std::uint64_t seed = 0;

    DataOptions data;       // train, features, complete, denoise
    DataOptions train_data; // knn-eval, rank-sweep
    DataOptions test_data;
    std::size_t validation_count = 0;
    bool log_timing = false;
    std::string model_out = "model.tnrbm";
    std::string log_out = "train_log.csv";

    std::string model_in;
    std::string features_out = "features.csv";

    std::size_t knn_k = 1;
    std::size_t max_train_per_class = 0;
    std::string predictions_out = "predictions.csv";

    HalfSide observed_half = HalfSide::Left;
    std::size_t gibbs_rounds = 100;
    Readout readout = Readout::ThresholdProbability;
    std::string out_dir = ".";
    std::string metrics_out;

    double noise = 0.1;
    std::size_t denoise_rounds = 5;

    std::vector<std::size_t> ranks_list{1, 8, 40};
    std::string sweep_out = "rank_sweep.csv";

    double tolerance = 1e-5;
    double fd_step = 1e-5;
    std::size_t grad_samples = 3;
};

int run_train(Cli& o) {
    const DenseTensor stack = load_idx(o.data.images);
    if (o.visible.empty())
        o.visible = default_visible(stack, o.data.bitplanes, o.variant);
    if (o.hidden.empty())
        throw ValueError("train requires --hidden");
    std::vector<LayerState> samples = samples_from_stack(stack, o.data, o.visible);
    std::vector<LayerState> validation;
    if (o.validation_count > 0) {
        if (o.validation_count >= samples.size())
            throw ValueError("validation count must leave at least one training sample");
        validation.assign(samples.end() - static_cast<std::ptrdiff_t>(o.validation_count),
                          samples.end());
        samples.erase(samples.end() - static_cast<std::ptrdiff_t>(o.validation_count), samples.end());
    }

    const ModelParams init = make_model(o.variant, o.visible, o.hidden, o.ranks, o.train.init_scale, o.seed);
    TrainConfig cfg = o.train.cfg;
    cfg.seed = o.seed;
    cfg.threads = o.threads;
    auto [model, log] = train(init, samples, cfg, validation.empty() ? nullptr : &validation);

    save_model(o.model_out, model);
    write_text_atomic(o.log_out, train_log_csv(log, o.log_timing));
    for (const auto& [rate, metric] : log.grid_validation)
        std::cout << "grid lr=" << fmt(rate) << " validation_recon=" << fmt(metric) << "\n";
    std::cout << "chosen_lr=" << fmt(log.chosen_learning_rate) << "\n"
              << "final_epoch_recon=" << fmt(final_epoch_mean_recon(log)) << "\n"
              << "model=" << o.model_out << "\n"
              << "log=" << o.log_out << "\n";
    return 0;
}

int run_features(Cli& o) {
    const ModelParams model = load_model(o.model_in);
    const std::vector<LayerState> samples = load_samples(o.data, model.visible_dims());
    std::string csv = "sample_id";
    for (std::size_t j = 0; j < model.hidden_size(); ++j)
        csv += ",f" + std::to_string(j);
    csv += "\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const DenseTensor f = extract_features(model, samples[i]);
        csv += std::to_string(i);
        for (double v : f.values())
            csv += "," + fmt(v);
        csv += "\n";
    }
    write_text_atomic(o.features_out, csv);
    std::cout << "wrote " << samples.size() << " feature rows to " << o.features_out << "\n";
    return 0;
}

int run_knn_eval(Cli& o) {
    const ModelParams model = load_model(o.model_in);
    std::vector<LayerState> train_samples = load_samples(o.train_data, model.visible_dims());
    std::vector<int> train_labels = load_labels(o.train_data.labels, train_samples.size());
    cap_per_class(train_samples, train_labels, o.max_train_per_class);
    o.test_data.bitplanes = o.train_data.bitplanes;
    o.test_data.threshold = o.train_data.threshold;
    const std::vector<LayerState> test_samples = load_samples(o.test_data, model.visible_dims());
    const std::vector<int> test_labels = load_labels(o.test_data.labels, test_samples.size());

    std::vector<int> predictions;
    const double error =
        knn_error_rate(model, train_samples, train_labels, test_samples, test_labels, o.knn_k,
                       &predictions);
    std::string csv = "sample_id,predicted_label,true_label\n";
    for (std::size_t i = 0; i < predictions.size(); ++i)
        csv += std::to_string(i) + "," + std::to_string(predictions[i]) + "," +
               std::to_string(test_labels[i]) + "\n";
    write_text_atomic(o.predictions_out, csv);
    std::cout << "error_rate=" << fmt(error) << " test_samples=" << predictions.size() << "\n";
    return 0;
}

std::string numbered(const std::string& dir, const char* stem, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%04zu.pgm", stem, i);
    return dir + "/" + buf;
}

int run_complete(Cli& o) {
    const ModelParams model = load_model(o.model_in);
    if (model.visible_dims().size() != 2)
        throw ValueError("complete requires a model with a 2-way visible layer");
    const std::vector<LayerState> samples = load_samples(o.data, model.visible_dims());
    std::filesystem::create_directories(o.out_dir);
    CompletionTask task{half_mask(model.visible_dims(), o.observed_half), o.gibbs_rounds, o.readout};

    std::string csv = "sample_id,psnr_db\n";
    double mean = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        Rng rng(derive_seed(o.seed, "complete", i));
        const LayerState result = complete(model, samples[i], task, rng);
        const double score = psnr(samples[i], result);
        mean += score;
        csv += std::to_string(i) + "," + fmt(score) + "\n";

        DenseTensor observed(model.visible_dims());
        for (std::size_t j = 0; j < observed.size(); ++j)
            observed.values()[j] = task.mask.values()[j] == 1.0 ? samples[i].values.values()[j] : 0.5;
        write_pgm(numbered(o.out_dir, "observed", i), observed);
        write_pgm(numbered(o.out_dir, "completed", i), result.values);
    }
    if (o.metrics_out.empty())
        o.metrics_out = o.out_dir + "/metrics.csv";
    write_text_atomic(o.metrics_out, csv);
    std::cout << "mean_psnr_db=" << fmt(mean / static_cast<double>(samples.size())) << " samples="
              << samples.size() << "\n";
    return 0;
}

int run_denoise(Cli& o) {
    const ModelParams model = load_model(o.model_in);
    if (model.visible_dims().size() != 2)
        throw ValueError("denoise requires a model with a 2-way visible layer");
    const std::vector<LayerState> samples = load_samples(o.data, model.visible_dims());
    std::filesystem::create_directories(o.out_dir);

    std::string csv = "sample_id,psnr_db\n";
    double mean = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        Rng noise_rng(derive_seed(o.seed, "noise", i));
        const LayerState noisy = add_salt_pepper(samples[i], o.noise, noise_rng);
        Rng rng(derive_seed(o.seed, "denoise", i));
        const LayerState restored = denoise(model, noisy, o.denoise_rounds, rng);
        const double score = psnr(samples[i], restored);
        mean += score;
        csv += std::to_string(i) + "," + fmt(score) + "\n";
        write_pgm(numbered(o.out_dir, "noisy", i), noisy.values);
        write_pgm(numbered(o.out_dir, "denoised", i), restored.values);
    }
    if (o.metrics_out.empty())
        o.metrics_out = o.out_dir + "/metrics.csv";
    write_text_atomic(o.metrics_out, csv);
    std::cout << "mean_psnr_db=" << fmt(mean / static_cast<double>(samples.size())) << " samples="
              << samples.size() << "\n";
    return 0;
}

int run_rank_sweep(Cli& o) {
    const DenseTensor train_stack = load_idx(o.train_data.images);
    if (o.visible.empty())
        o.visible = default_visible(train_stack, o.train_data.bitplanes, ModelVariant::Mporbm);
    if (o.hidden.empty())
        throw ValueError("rank-sweep requires --hidden");
    if (o.visible.size() < 2)
        throw ValueError("rank-sweep needs at least two visible modes");
    std::vector<LayerState> train_samples = samples_from_stack(train_stack, o.train_data, o.visible);
    std::vector<int> train_labels = load_labels(o.train_data.labels, train_samples.size());
    cap_per_class(train_samples, train_labels, o.max_train_per_class);
    o.test_data.bitplanes = o.train_data.bitplanes;
    o.test_data.threshold = o.train_data.threshold;
    const std::vector<LayerState> test_samples = load_samples(o.test_data, o.visible);
    const std::vector<int> test_labels = load_labels(o.test_data.labels, test_samples.size());

    TrainConfig cfg = o.train.cfg;
    cfg.seed = o.seed;
    cfg.threads = o.threads;
    std::string csv = "rank,error_rate\n";
    for (std::size_t rank : o.ranks_list) {
        Dims ranks(o.visible.size() + 1, rank);
        ranks.front() = ranks.back() = 1;
        const ModelParams init =
            ModelParams::random_mporbm(o.visible, o.hidden, ranks, o.train.init_scale, o.seed);
        auto [model, log] = train(init, train_samples, cfg, nullptr);
        const double error =
            knn_error_rate(model, train_samples, train_labels, test_samples, test_labels, o.knn_k);
        csv += std::to_string(rank) + "," + fmt(error) + "\n";
        std::cout << "rank=" << rank << " error_rate=" << fmt(error) << "\n";
    }
    write_text_atomic(o.sweep_out, csv);
    std::cout << "sweep=" << o.sweep_out << "\n";
    return 0;
}

int run_materialize(Cli& o, std::size_t max_entries) {
    const ModelParams model = load_model(o.model_in);
    if (model.variant() != ModelVariant::Mporbm)
        throw ValueError("materialize expects an mporbm model file");
    const DenseTensor full = materialize(model.mpo_weights(), max_entries);
    const std::size_t m = model.visible_size(), n = model.hidden_size();
    ModelParams dense = ModelParams::rbm(reshape(full, Dims{m, n}),
                                         reshape(model.visible_bias(), Dims{m}),
                                         reshape(model.hidden_bias(), Dims{n}));
    save_model(o.model_out, dense);
    std::cout << "wrote rbm " << m << "x" << n << " to " << o.model_out << "\n";
    return 0;
}

int run_grad_check(Cli& o) {
    if (o.visible.empty())
        o.visible = {2, 2};
    if (o.hidden.empty())
        o.hidden = {2, 2};
    if (o.ranks.empty())
        o.ranks = {1, 2, 1};
    if (product(o.visible) + product(o.hidden) > 12)
        throw ValueError("grad-check is limited to 12 total units");

    ModelParams model =
        ModelParams::random_mporbm(o.visible, o.hidden, o.ranks, o.train.init_scale, o.seed);
    Rng data_rng(derive_seed(o.seed, "grad-data"));
    std::vector<LayerState> data;
    for (std::size_t i = 0; i < std::max<std::size_t>(o.grad_samples, 1); ++i) {
        DenseTensor v(o.visible);
        for (double& x : v.values())
            x = data_rng.bernoulli(0.5) ? 1.0 : 0.0;
        data.emplace_back(std::move(v), LayerRole::Visible);
    }

    const GradientSet analytic = exact_log_likelihood_gradient(model, data);
    const double step = o.fd_step;
    auto fd_max_rel = [&](DenseTensor& param, const DenseTensor& grad) {
        double worst = 0.0;
        for (std::size_t i = 0; i < param.size(); ++i) {
            const double saved = param.values()[i];
            param.values()[i] = saved + step;
            const double up = exact_log_likelihood(model, data);
            param.values()[i] = saved - step;
            const double down = exact_log_likelihood(model, data);
            param.values()[i] = saved;
            const double fd = (up - down) / (2.0 * step);
            const double a = grad.values()[i];
            const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3});
            worst = std::max(worst, rel);
        }
        return worst;
    };

    bool ok = true;
    for (std::size_t k = 0; k < model.mpo_weights().order(); ++k) {
        const double worst = fd_max_rel(model.mpo_weights().core(k), analytic.weights[k]);
        ok = ok && worst <= o.tolerance;
        std::cout << "core=" << k << " max_rel_error=" << fmt(worst) << "\n";
    }
    const double wb = fd_max_rel(model.visible_bias(), analytic.visible_bias);
    std::cout << "visible_bias max_rel_error=" << fmt(wb) << "\n";
    const double hb = fd_max_rel(model.hidden_bias(), analytic.hidden_bias);
    std::cout << "hidden_bias max_rel_error=" << fmt(hb) << "\n";
    ok = ok && wb <= o.tolerance && hb <= o.tolerance;
    std::cout << "grad-check: " << (ok ? "PASS" : "FAIL") << " (tolerance " << fmt(o.tolerance)
              << ", step " << fmt(step) << ")\n";
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"tensor-network RBM toolkit (rbm / mvrbm / mporbm)"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key=value config file");

    Cli o;
    app.add_option("--threads", o.threads, "worker thread cap")
        ->envname("TNRBM_THREADS")
        ->capture_default_str();

    const std::map<std::string, ModelVariant> variant_names{
        {"rbm", ModelVariant::Rbm}, {"mvrbm", ModelVariant::Mvrbm}, {"mporbm", ModelVariant::Mporbm}};
    const std::map<std::string, HalfSide> half_names{{"left", HalfSide::Left},
                                                     {"right", HalfSide::Right},
                                                     {"top", HalfSide::Top},
                                                     {"bottom", HalfSide::Bottom}};
    const std::map<std::string, Readout> readout_names{{"threshold", Readout::ThresholdProbability},
                                                       {"sample", Readout::FinalSample}};

    auto add_model_shape = [&](CLI::App* cmd, bool with_variant) {
        if (with_variant)
            cmd->add_option("--variant", o.variant, "model variant")
                ->transform(CLI::CheckedTransformer(variant_names))
                ->capture_default_str();
        cmd->add_option("--visible", o.visible, "visible dims (comma separated)")->delimiter(',');
        cmd->add_option("--hidden", o.hidden, "hidden dims (comma separated)")->delimiter(',');
        cmd->add_option("--ranks", o.ranks, "MPO rank vector, length d+1")->delimiter(',');
    };
    auto add_seed = [&](CLI::App* cmd) {
        cmd->add_option("--seed", o.seed, "master seed")->capture_default_str();
    };

    CLI::App* c_train = app.add_subcommand("train", "train a model and save it");
    add_model_shape(c_train, true);
    add_seed(c_train);
    add_train_options(c_train, o.train);
    add_data_options(c_train, o.data, false);
    c_train->add_option("--validation-count", o.validation_count,
                        "samples held out from the end of the stack for learning-rate selection")
        ->capture_default_str();
    c_train->add_flag("--log-timing", o.log_timing, "include wall_ms in the training log CSV");
    c_train->add_option("--model-out", o.model_out, "output model file")->capture_default_str();
    c_train->add_option("--log-out", o.log_out, "output training-log CSV")->capture_default_str();

    CLI::App* c_features = app.add_subcommand("features", "hidden-probability features as CSV");
    c_features->add_option("--model", o.model_in, "model file")->required();
    add_data_options(c_features, o.data, false);
    c_features->add_option("--features-out", o.features_out, "output CSV")->capture_default_str();

    CLI::App* c_knn = app.add_subcommand("knn-eval", "1-NN classification on hidden features");
    c_knn->add_option("--model", o.model_in, "model file")->required();
    add_data_options(c_knn, o.train_data, true, "train-");
    add_data_options(c_knn, o.test_data, true, "test-");
    c_knn->add_option("--k", o.knn_k, "number of neighbours")->capture_default_str();
    c_knn->add_option("--max-train-per-class", o.max_train_per_class,
                      "cap on training samples per class (0 = no cap)")
        ->capture_default_str();
    c_knn->add_option("--predictions-out", o.predictions_out, "output CSV")->capture_default_str();

    CLI::App* c_complete = app.add_subcommand("complete", "clamped-Gibbs half-image completion");
    c_complete->add_option("--model", o.model_in, "model file")->required();
    add_data_options(c_complete, o.data, false);
    add_seed(c_complete);
    c_complete->add_option("--observed-half", o.observed_half, "which half is observed")
        ->transform(CLI::CheckedTransformer(half_names))
        ->capture_default_str();
    c_complete->add_option("--gibbs-rounds", o.gibbs_rounds, "clamped Gibbs rounds")
        ->capture_default_str();
    c_complete->add_option("--readout", o.readout, "threshold | sample")
        ->transform(CLI::CheckedTransformer(readout_names))
        ->capture_default_str();
    c_complete->add_option("--out-dir", o.out_dir, "directory for PGM output")->capture_default_str();
    c_complete->add_option("--metrics-out", o.metrics_out, "PSNR CSV (default <out-dir>/metrics.csv)");

    CLI::App* c_denoise = app.add_subcommand("denoise", "salt-&-pepper denoising");
    c_denoise->add_option("--model", o.model_in, "model file")->required();
    add_data_options(c_denoise, o.data, false);
    add_seed(c_denoise);
    c_denoise->add_option("--noise", o.noise, "salt-&-pepper fraction")->capture_default_str();
    c_denoise->add_option("--rounds", o.denoise_rounds, "Gibbs rounds")->capture_default_str();
    c_denoise->add_option("--out-dir", o.out_dir, "directory for PGM output")->capture_default_str();
    c_denoise->add_option("--metrics-out", o.metrics_out, "PSNR CSV (default <out-dir>/metrics.csv)");

    CLI::App* c_sweep = app.add_subcommand("rank-sweep", "train mporbm per rank, report 1-NN error");
    add_model_shape(c_sweep, false);
    add_seed(c_sweep);
    add_train_options(c_sweep, o.train);
    add_data_options(c_sweep, o.train_data, true, "train-");
    add_data_options(c_sweep, o.test_data, true, "test-");
    c_sweep->add_option("--rank-list", o.ranks_list, "internal ranks to sweep")
        ->delimiter(',')
        ->capture_default_str();
    c_sweep->add_option("--k", o.knn_k, "number of neighbours")->capture_default_str();
    c_sweep->add_option("--max-train-per-class", o.max_train_per_class,
                        "cap on training samples per class (0 = no cap)")
        ->capture_default_str();
    c_sweep->add_option("--sweep-out", o.sweep_out, "output CSV")->capture_default_str();

    std::size_t max_entries = 100000000;
    CLI::App* c_mat = app.add_subcommand("materialize", "expand an mporbm model into a dense rbm model");
    c_mat->add_option("--model", o.model_in, "input mporbm model file")->required();
    c_mat->add_option("--model-out", o.model_out, "output rbm model file")->capture_default_str();
    c_mat->add_option("--max-entries", max_entries, "cap on materialized weight entries")
        ->capture_default_str();

    CLI::App* c_grad = app.add_subcommand("grad-check", "finite-difference check of the exact gradient");
    add_model_shape(c_grad, false);
    add_seed(c_grad);
    c_grad->add_option("--init-scale", o.train.init_scale, "stddev of the Gaussian weight initialization")
        ->capture_default_str();
    c_grad->add_option("--tolerance", o.tolerance, "max allowed relative error")->capture_default_str();
    c_grad->add_option("--step", o.fd_step, "finite-difference step")->capture_default_str();
    c_grad->add_option("--samples", o.grad_samples, "random binary samples in the dataset")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (c_train->parsed())
            return run_train(o);
        if (c_features->parsed())
            return run_features(o);
        if (c_knn->parsed())
            return run_knn_eval(o);
        if (c_complete->parsed())
            return run_complete(o);
        if (c_denoise->parsed())
            return run_denoise(o);
        if (c_sweep->parsed())
            return run_rank_sweep(o);
        if (c_mat->parsed())
            return run_materialize(o, max_entries);
        if (c_grad->parsed())
            return run_grad_check(o);
        std::cerr << "error: no subcommand\n";
        return 2;
    } catch (const TooLargeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
