#include "resx/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "resx/complexity.hpp"
#include "resx/io.hpp"
#include "resx/parallel.hpp"

namespace resx {

void Dataset::validate() const {
    if (inputs.empty()) throw std::invalid_argument("dataset must be non-empty");
    if (inputs.size() != labels.size()) {
        throw std::invalid_argument("dataset inputs/labels length mismatch");
    }
    if (classes == 0) throw std::invalid_argument("dataset class count unset");
    for (int label : labels) {
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
            throw std::invalid_argument("dataset label out of range");
        }
    }
}

SyntheticKind synthetic_from_name(const std::string& name) {
    if (name == "blobs") return SyntheticKind::blobs;
    if (name == "rings") return SyntheticKind::rings;
    throw std::invalid_argument("unknown synthetic dataset: " + name);
}

std::pair<Dataset, Dataset> make_synthetic(SyntheticKind kind, std::size_t n_samples,
                                           std::size_t classes, std::size_t d_in, double noise,
                                           std::uint64_t seed) {
    if (classes < 2) throw std::invalid_argument("make_synthetic: need at least 2 classes");
    if (n_samples < 2 * classes) {
        throw std::invalid_argument("make_synthetic: need n_samples >= 2 * classes");
    }
    if (d_in < 2) throw std::invalid_argument("make_synthetic: need d_in >= 2");
    if (noise < 0.0) throw std::invalid_argument("make_synthetic: noise must be >= 0");

    constexpr double kTwoPi = 6.28318530717958647692;
    Rng point_rng = Rng(seed).split(0);
    Rng shuffle_rng = Rng(seed).split(1);

    std::vector<Tensor> inputs;
    std::vector<int> labels;
    inputs.reserve(n_samples);
    labels.reserve(n_samples);
    for (std::size_t s = 0; s < n_samples; ++s) {
        const std::size_t c = s % classes;  // balanced classes
        Tensor x = Tensor::zeros(d_in);
        if (kind == SyntheticKind::blobs) {
            const double angle = kTwoPi * static_cast<double>(c) / static_cast<double>(classes);
            x(0) = 2.0 * std::cos(angle);
            x(1) = 2.0 * std::sin(angle);
            for (std::size_t d = 0; d < d_in; ++d) x(d) += noise * point_rng.gaussian();
        } else {
            // Concentric annuli; radial class structure defeats any affine
            // separator.
            const double radius = static_cast<double>(c + 1) / static_cast<double>(classes);
            const double angle = kTwoPi * point_rng.uniform();
            x(0) = radius * std::cos(angle) + noise * point_rng.gaussian();
            x(1) = radius * std::sin(angle) + noise * point_rng.gaussian();
            for (std::size_t d = 2; d < d_in; ++d) x(d) = noise * point_rng.gaussian();
        }
        inputs.push_back(std::move(x));
        labels.push_back(static_cast<int>(c));
    }

    // Fisher-Yates, then first 80% train.
    std::vector<std::size_t> order(n_samples);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n_samples; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(shuffle_rng.uniform() * static_cast<double>(i));
        std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }

    const std::size_t train_count = std::max<std::size_t>(1, (n_samples * 8) / 10);
    Dataset train_set, test_set;
    train_set.split = SplitTag::train;
    test_set.split = SplitTag::test;
    train_set.classes = test_set.classes = classes;
    for (std::size_t i = 0; i < n_samples; ++i) {
        Dataset& target = i < train_count ? train_set : test_set;
        target.inputs.push_back(inputs[order[i]]);
        target.labels.push_back(labels[order[i]]);
    }
    train_set.validate();
    test_set.validate();
    return {std::move(train_set), std::move(test_set)};
}

namespace {

std::uint32_t read_be_u32(const std::string& bytes, std::size_t offset, const std::string& path) {
    if (offset + 4 > bytes.size()) {
        throw FormatError("truncated IDX file " + path + " at byte " + std::to_string(offset),
                          offset);
    }
    return (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset])) << 24) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + 1])) << 16) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + 2])) << 8) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + 3]));
}

}  // namespace

Dataset load_idx_images(const std::string& images_path, const std::string& labels_path,
                        std::size_t limit) {
    if (limit == 0) throw std::invalid_argument("load_idx_images: limit must be > 0");

    const std::string images = read_file(images_path);
    const std::string labels = read_file(labels_path);

    if (read_be_u32(images, 0, images_path) != 0x00000803u) {
        throw FormatError("bad IDX image magic in " + images_path, 0);
    }
    const std::size_t image_count = read_be_u32(images, 4, images_path);
    const std::size_t rows = read_be_u32(images, 8, images_path);
    const std::size_t cols = read_be_u32(images, 12, images_path);
    const std::size_t pixels = rows * cols;
    if (images.size() != 16 + image_count * pixels) {
        throw FormatError("IDX image payload size mismatch in " + images_path,
                          std::min(images.size(), 16 + image_count * pixels));
    }

    if (read_be_u32(labels, 0, labels_path) != 0x00000801u) {
        throw FormatError("bad IDX label magic in " + labels_path, 0);
    }
    const std::size_t label_count = read_be_u32(labels, 4, labels_path);
    if (labels.size() != 8 + label_count) {
        throw FormatError("IDX label payload size mismatch in " + labels_path,
                          std::min(labels.size(), 8 + label_count));
    }
    if (image_count != label_count) {
        throw FormatError("IDX image/label counts disagree (" + std::to_string(image_count) +
                              " vs " + std::to_string(label_count) + ")",
                          4);
    }
    if (image_count == 0) throw FormatError("IDX file has no samples", 4);

    const std::size_t count = std::min(limit, image_count);
    Dataset data;
    data.split = SplitTag::train;
    int max_label = 0;
    for (std::size_t s = 0; s < count; ++s) {
        Tensor x = Tensor::zeros(pixels);
        for (std::size_t p = 0; p < pixels; ++p) {
            x(p) = static_cast<double>(static_cast<unsigned char>(images[16 + s * pixels + p])) / 255.0;
        }
        data.inputs.push_back(std::move(x));
        const int label = static_cast<unsigned char>(labels[8 + s]);
        data.labels.push_back(label);
        max_label = std::max(max_label, label);
    }
    data.classes = static_cast<std::size_t>(max_label) + 1;
    data.validate();
    return data;
}

double lambda_for(LambdaRule rule, std::size_t n, double explicit_value) {
    switch (rule) {
        case LambdaRule::one: return 1.0;
        case LambdaRule::inv_n: return n == 0 ? 0.0 : 1.0 / static_cast<double>(n);
        case LambdaRule::inv_sqrt_n: return n == 0 ? 0.0 : 1.0 / std::sqrt(static_cast<double>(n));
        case LambdaRule::explicit_value: return explicit_value;
    }
    return explicit_value;
}

std::string rule_name(LambdaRule rule) {
    switch (rule) {
        case LambdaRule::one: return "one";
        case LambdaRule::inv_n: return "inv_n";
        case LambdaRule::inv_sqrt_n: return "inv_sqrt_n";
        case LambdaRule::explicit_value: return "explicit";
    }
    return "explicit";
}

LambdaRule rule_from_name(const std::string& name) {
    if (name == "one") return LambdaRule::one;
    if (name == "inv_n") return LambdaRule::inv_n;
    if (name == "inv_sqrt_n") return LambdaRule::inv_sqrt_n;
    if (name == "explicit") return LambdaRule::explicit_value;
    throw std::invalid_argument("unknown lambda rule: " + name);
}

void TrainConfig::validate(const Dataset& train_set) const {
    if (steps == 0) throw std::invalid_argument("train: steps must be > 0");
    if (batch_size == 0 || batch_size > train_set.size()) {
        throw std::invalid_argument("train: batch_size must be in [1, |train set|]");
    }
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) {
        throw std::invalid_argument("train: momentum must be in [0, 1)");
    }
}

std::string records_to_csv(std::span<const ExperimentRecord> records) {
    std::string csv = "n,lambda_rule,lambda,seed,step,train_loss,test_acc,gc,diverged,frozen\n";
    for (const ExperimentRecord& r : records) {
        csv += std::to_string(r.n);
        csv += ',';
        csv += rule_name(r.rule);
        csv += ',';
        csv += fmt17(r.lambda);
        csv += ',';
        csv += std::to_string(r.seed);
        csv += ',';
        csv += std::to_string(r.step);
        csv += ',';
        csv += fmt_opt(r.train_loss);
        csv += ',';
        csv += fmt_opt(r.test_acc);
        csv += ',';
        csv += fmt_opt(r.gc);
        csv += ',';
        csv += r.diverged ? '1' : '0';
        csv += ',';
        csv += r.frozen ? '1' : '0';
        csv += '\n';
    }
    return csv;
}

double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
    const bool batched = logits.rank() == 2;
    const std::size_t batch = batched ? logits.cols() : 1;
    const std::size_t classes = batched ? logits.rows() : logits.size();
    if (labels.size() != batch) {
        throw ShapeError("softmax_cross_entropy: label count != batch size");
    }
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        double max_logit = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < classes; ++c) {
            max_logit = std::max(max_logit, batched ? logits(c, b) : logits(c));
        }
        double sum_exp = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            sum_exp += std::exp((batched ? logits(c, b) : logits(c)) - max_logit);
        }
        const double lse = max_logit + std::log(sum_exp);
        const double hit = batched ? logits(static_cast<std::size_t>(labels[b]), b)
                                   : logits(static_cast<std::size_t>(labels[b]));
        total += lse - hit;
    }
    return total / static_cast<double>(batch);
}

namespace {

Tensor gather_columns(const Dataset& data, std::span<const std::size_t> indices) {
    const std::size_t d_in = data.inputs.front().size();
    Tensor batch = Tensor::zeros(d_in, indices.size());
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const Tensor& x = data.inputs[indices[b]];
        for (std::size_t d = 0; d < d_in; ++d) batch(d, b) = x(d);
    }
    return batch;
}

// d(mean CE)/d(logits) = (softmax - onehot) / batch, computed stably.
Tensor softmax_grad(const Tensor& logits, std::span<const int> labels) {
    Tensor grad = logits;
    const std::size_t batch = logits.cols();
    const std::size_t classes = logits.rows();
    for (std::size_t b = 0; b < batch; ++b) {
        double max_logit = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < classes; ++c) max_logit = std::max(max_logit, logits(c, b));
        double sum_exp = 0.0;
        for (std::size_t c = 0; c < classes; ++c) sum_exp += std::exp(logits(c, b) - max_logit);
        for (std::size_t c = 0; c < classes; ++c) {
            double p = std::exp(logits(c, b) - max_logit) / sum_exp;
            if (static_cast<std::size_t>(labels[b]) == c) p -= 1.0;
            grad(c, b) = p / static_cast<double>(batch);
        }
    }
    return grad;
}

}  // namespace

double dataset_loss(const ResidualNetParams& params, const ModelConfig& config,
                    const Dataset& data) {
    data.validate();
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), 0);
    Tensor logits = forward(params, config, gather_columns(data, all));
    return softmax_cross_entropy(logits, data.labels);
}

double dataset_accuracy(const ResidualNetParams& params, const ModelConfig& config,
                        const Dataset& data) {
    data.validate();
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), 0);
    Tensor logits = forward(params, config, gather_columns(data, all));
    std::size_t hits = 0;
    for (std::size_t b = 0; b < data.size(); ++b) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.rows(); ++c) {
            if (logits(c, b) > logits(best, b)) best = c;
        }
        if (static_cast<int>(best) == data.labels[b]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

TrainResult train(ResidualNetParams params, const ModelConfig& config, const TrainConfig& tc,
                  const Dataset& train_set, const Dataset& test_set, LambdaRule rule_tag) {
    config.validate();
    params.check_shapes(config);
    train_set.validate();
    test_set.validate();
    tc.validate(train_set);
    if (train_set.classes > config.d_out) {
        throw std::invalid_argument("train: d_out smaller than class count");
    }

    const DiffGraph net = build_network_graph(config);
    Rng batch_rng = Rng(tc.seed).split(1);
    Rng gc_rng = Rng(tc.seed).split(2);

    // Seeded GC subsample, fixed for the whole run.
    std::vector<std::size_t> gc_indices(train_set.size());
    std::iota(gc_indices.begin(), gc_indices.end(), 0);
    if (tc.gc_subsample > 0 && tc.gc_subsample < gc_indices.size()) {
        for (std::size_t i = 0; i < tc.gc_subsample; ++i) {
            const std::size_t j =
                i + static_cast<std::size_t>(gc_rng.uniform() *
                                             static_cast<double>(gc_indices.size() - i));
            std::swap(gc_indices[i], gc_indices[std::min(j, gc_indices.size() - 1)]);
        }
        gc_indices.resize(tc.gc_subsample);
        std::sort(gc_indices.begin(), gc_indices.end());
    }
    std::vector<Tensor> gc_inputs;
    gc_inputs.reserve(gc_indices.size());
    for (std::size_t idx : gc_indices) gc_inputs.push_back(train_set.inputs[idx]);

    std::vector<Tensor> velocity;
    velocity.reserve(params.tensors().size());
    for (const Tensor& t : params.tensors()) {
        velocity.push_back(t.rank() == 2 ? Tensor::zeros(t.rows(), t.cols())
                                         : Tensor::zeros(t.size()));
    }

    TrainResult result;
    result.final_params = std::move(params);
    ResidualNetParams& p = result.final_params;

    auto full_loss = [&]() -> std::optional<double> {
        try {
            const double loss = dataset_loss(p, config, train_set);
            return std::isfinite(loss) ? std::optional<double>(loss) : std::nullopt;
        } catch (const OverflowError&) {
            return std::nullopt;
        }
    };

    auto emit_metrics = [&](std::size_t step) {
        ExperimentRecord r;
        r.n = config.n;
        r.rule = rule_tag;
        r.lambda = config.lambda;
        r.seed = tc.seed;
        r.step = step;
        r.frozen = result.frozen;
        r.train_loss = full_loss();
        if (r.train_loss.has_value()) {
            try {
                r.test_acc = dataset_accuracy(p, config, test_set);
                if (tc.log_gc) r.gc = geometric_complexity(p, config, gc_inputs);
            } catch (const OverflowError&) {
                r.test_acc.reset();
                r.gc.reset();
            }
        }
        if (!r.train_loss.has_value()) {
            r.diverged = true;
            result.diverged = true;
        }
        result.records.push_back(std::move(r));
        return !result.diverged;
    };

    auto emit_diverged = [&](std::size_t step) {
        result.diverged = true;
        ExperimentRecord r;
        r.n = config.n;
        r.rule = rule_tag;
        r.lambda = config.lambda;
        r.seed = tc.seed;
        r.step = step;
        r.diverged = true;
        r.frozen = result.frozen;
        result.records.push_back(std::move(r));
    };

    // Freeze detection: the full-train loss must leave a 1% band around its
    // initial value during the first 20% of steps, sampled at a fixed cadence.
    const std::size_t freeze_window = tc.steps / 5;
    const std::size_t freeze_check_every = std::max<std::size_t>(1, tc.steps / 50);
    const std::optional<double> initial_loss = full_loss();
    bool frozen_candidate = initial_loss.has_value();

    if (!emit_metrics(0)) return result;

    for (std::size_t step = 1; step <= tc.steps; ++step) {
        std::vector<std::size_t> batch_indices(tc.batch_size);
        std::vector<int> batch_labels(tc.batch_size);
        for (std::size_t b = 0; b < tc.batch_size; ++b) {
            auto idx = static_cast<std::size_t>(batch_rng.uniform() *
                                                static_cast<double>(train_set.size()));
            idx = std::min(idx, train_set.size() - 1);
            batch_indices[b] = idx;
            batch_labels[b] = train_set.labels[idx];
        }
        Tensor batch = gather_columns(train_set, batch_indices);

        try {
            Tensor logits = forward(net, p.tensors(), batch);
            const double loss = softmax_cross_entropy(logits, batch_labels);
            if (!std::isfinite(loss)) {
                emit_diverged(step);
                break;
            }
            VjpResult grads = vjp(net, p.tensors(), batch, softmax_grad(logits, batch_labels));
            for (std::size_t t = 0; t < velocity.size(); ++t) {
                auto v = velocity[t].data();
                auto g = grads.param_grads[t].data();
                auto w = p.tensors()[t].data();
                for (std::size_t i = 0; i < v.size(); ++i) {
                    v[i] = tc.momentum * v[i] + g[i];
                    w[i] -= tc.learning_rate * v[i];
                }
            }
        } catch (const OverflowError&) {
            emit_diverged(step);
            break;
        }

        if (frozen_candidate && step <= freeze_window && step % freeze_check_every == 0) {
            const std::optional<double> loss_now = full_loss();
            if (!loss_now.has_value() ||
                std::abs(*loss_now - *initial_loss) > 0.01 * std::abs(*initial_loss)) {
                frozen_candidate = false;
            }
        }
        if (step == freeze_window && frozen_candidate) {
            result.frozen = true;
        }

        const bool last = step == tc.steps;
        const bool periodic = tc.gc_log_every > 0 && step % tc.gc_log_every == 0;
        if (last || periodic) {
            if (!emit_metrics(step)) break;
        }
    }

    if (!result.diverged && !result.records.empty()) {
        result.final_train_loss = result.records.back().train_loss;
    }
    return result;
}

std::vector<ExplosionRecord> explosion_sweep(std::span<const std::size_t> depths,
                                             std::span<const LambdaRule> rules,
                                             std::span<const std::uint64_t> seeds,
                                             const ModelConfig& config_template) {
    std::vector<ExplosionRecord> records;
    records.reserve(depths.size() * rules.size() * seeds.size());
    for (std::size_t n : depths) {
        for (LambdaRule rule : rules) {
            for (std::uint64_t seed : seeds) {
                ModelConfig config = config_template;
                config.n = n;
                config.lambda = lambda_for(rule, n, config_template.lambda);

                Rng init_rng(seed);
                const ResidualNetParams params = ResidualNetParams::init(config, init_rng);

                Rng probe_rng = Rng(seed).split(3);
                Tensor z = gaussian(probe_rng, config.d_e, 1.0);
                z = scale(z, 1.0 / norm2(z));  // unit-norm probe

                ExplosionRecord rec;
                rec.n = n;
                rec.rule = rule;
                rec.lambda = config.lambda;
                rec.seed = seed;
                Tensor value = z;
                for (std::size_t i = 0; i < n; ++i) {
                    value = add(value, scale(branch_eval(params, config, i, value), config.lambda));
                    if (!value.all_finite()) {
                        rec.diverged = true;
                        rec.diverged_block = i + 1;
                        break;
                    }
                    rec.block_norms.push_back(norm2(value));
                }
                if (!rec.diverged) rec.gain = rec.block_norms.empty() ? 1.0 : rec.block_norms.back();
                records.push_back(std::move(rec));
            }
        }
    }
    return records;
}

std::string explosion_to_csv(std::span<const ExplosionRecord> records) {
    std::string csv = "n,lambda_rule,lambda,seed,gain,diverged,diverged_block\n";
    for (const ExplosionRecord& r : records) {
        csv += std::to_string(r.n);
        csv += ',';
        csv += rule_name(r.rule);
        csv += ',';
        csv += fmt17(r.lambda);
        csv += ',';
        csv += std::to_string(r.seed);
        csv += ',';
        csv += r.diverged ? std::string() : fmt17(r.gain);
        csv += ',';
        csv += r.diverged ? '1' : '0';
        csv += ',';
        csv += r.diverged ? std::to_string(r.diverged_block) : std::string();
        csv += '\n';
    }
    return csv;
}

CapacitySweepResult lambda_capacity_sweep(std::span<const double> lambdas, std::size_t n,
                                          const ModelConfig& config_template,
                                          const TrainConfig& tc, const Dataset& train_set,
                                          const Dataset& test_set,
                                          std::span<const std::uint64_t> seeds,
                                          std::size_t jobs) {
    for (std::size_t i = 1; i < lambdas.size(); ++i) {
        if (lambdas[i] < lambdas[i - 1]) {
            throw std::invalid_argument("lambda_capacity_sweep: lambdas must be ascending");
        }
    }

    const std::size_t task_count = lambdas.size() * seeds.size();
    std::vector<TrainResult> runs;
    runs.resize(task_count);
    parallel_for(jobs, task_count, [&](std::size_t task) {
        const std::size_t li = task / seeds.size();
        const std::size_t si = task % seeds.size();
        ModelConfig config = config_template;
        config.n = n;
        config.lambda = lambdas[li];
        TrainConfig run_tc = tc;
        run_tc.seed = seeds[si];
        Rng init_rng(seeds[si]);
        ResidualNetParams params = ResidualNetParams::init(config, init_rng);
        runs[task] = train(std::move(params), config, run_tc, train_set, test_set,
                           LambdaRule::explicit_value);
    });

    CapacitySweepResult result;
    for (std::size_t li = 0; li < lambdas.size(); ++li) {
        CapacitySummary summary{.lambda = lambdas[li], .seeds = seeds.size()};
        double acc_sum = 0.0;
        double gc_sum = 0.0;
        std::size_t acc_count = 0;
        std::size_t gc_count = 0;
        for (std::size_t si = 0; si < seeds.size(); ++si) {
            const TrainResult& run = runs[li * seeds.size() + si];
            summary.any_diverged = summary.any_diverged || run.diverged;
            double best_acc = -1.0;
            std::optional<double> gc_at_best;
            for (const ExperimentRecord& r : run.records) {
                if (r.test_acc.has_value() && *r.test_acc > best_acc) {
                    best_acc = *r.test_acc;
                    gc_at_best = r.gc;
                }
                result.records.push_back(r);
            }
            if (best_acc >= 0.0) {
                acc_sum += best_acc;
                ++acc_count;
            }
            if (gc_at_best.has_value()) {
                gc_sum += *gc_at_best;
                ++gc_count;
            }
        }
        if (acc_count > 0) summary.mean_max_test_acc = acc_sum / static_cast<double>(acc_count);
        if (gc_count > 0) summary.mean_gc_at_max = gc_sum / static_cast<double>(gc_count);
        result.summaries.push_back(summary);
    }
    return result;
}

EmbeddingReport embedding_check(const ResidualNetParams& params, const ModelConfig& config,
                                const Dataset& data, std::span<const std::size_t> extra_depths) {
    EmbeddingReport report;
    report.base_loss = dataset_loss(params, config, data);
    for (std::size_t extra : extra_depths) {
        auto [padded_params, padded_config] = zero_pad_depth(params, config, extra);
        const double padded_loss = dataset_loss(padded_params, padded_config, data);
        const double deviation = std::abs(padded_loss - report.base_loss);
        report.extra_depths.push_back(extra);
        report.deviations.push_back(deviation);
        report.max_abs_deviation = std::max(report.max_abs_deviation, deviation);
    }
    return report;
}

nlohmann::ordered_json embedding_to_json(const EmbeddingReport& report) {
    return nlohmann::ordered_json{
        {"base_loss", report.base_loss},
        {"extra_depths", report.extra_depths},
        {"deviations", report.deviations},
        {"max_abs_deviation", report.max_abs_deviation},
    };
}

}  // namespace resx
