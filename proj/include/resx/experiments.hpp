#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "resx/model.hpp"

namespace resx {

enum class SplitTag { train, test };

// Labeled point cloud; inputs are rank-1 tensors of width d_in.
struct Dataset {
    std::vector<Tensor> inputs;
    std::vector<int> labels;
    SplitTag split = SplitTag::train;
    std::size_t classes = 0;

    std::size_t size() const noexcept { return inputs.size(); }
    void validate() const;
};

enum class SyntheticKind { blobs, rings };

SyntheticKind synthetic_from_name(const std::string& name);

// Deterministic synthetic benchmarks with an 80/20 train/test split.
// `blobs` is linearly separable at low noise; `rings` (concentric annuli)
// is not, so the affine base model underfits it.
std::pair<Dataset, Dataset> make_synthetic(SyntheticKind kind, std::size_t n_samples,
                                           std::size_t classes, std::size_t d_in, double noise,
                                           std::uint64_t seed);

// Thrown on malformed IDX files; offset is the byte position of the problem.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

// IDX image/label pair (big-endian magics 0x803 / 0x801). Pixels scaled to
// [0,1] and flattened; truncated to `limit` samples (limit must be > 0).
Dataset load_idx_images(const std::string& images_path, const std::string& labels_path,
                        std::size_t limit);

enum class LambdaRule { one, inv_n, inv_sqrt_n, explicit_value };

double lambda_for(LambdaRule rule, std::size_t n, double explicit_value = 0.0);
std::string rule_name(LambdaRule rule);
LambdaRule rule_from_name(const std::string& name);

enum class LossKind { softmax_cross_entropy };

struct TrainConfig {
    std::size_t steps = 1000;
    std::size_t batch_size = 64;
    double learning_rate = 0.1;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    std::size_t gc_log_every = 0;   // 0 disables the periodic metric records
    LossKind loss = LossKind::softmax_cross_entropy;
    std::size_t gc_subsample = 512; // 0 = full train set when computing GC
    bool log_gc = false;            // include GC in periodic records

    void validate(const Dataset& train_set) const;
};

// One row of a sweep. Metric fields are absent on and after divergence.
struct ExperimentRecord {
    std::size_t n = 0;
    LambdaRule rule = LambdaRule::explicit_value;
    double lambda = 0.0;
    std::uint64_t seed = 0;
    std::size_t step = 0;
    std::optional<double> train_loss;
    std::optional<double> test_acc;
    std::optional<double> gc;
    bool diverged = false;
    bool frozen = false;
};

// CSV with header n,lambda_rule,lambda,seed,step,train_loss,test_acc,gc,diverged,frozen.
std::string records_to_csv(std::span<const ExperimentRecord> records);

double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);
double dataset_loss(const ResidualNetParams& params, const ModelConfig& config,
                    const Dataset& data);
double dataset_accuracy(const ResidualNetParams& params, const ModelConfig& config,
                        const Dataset& data);

struct TrainResult {
    std::vector<ExperimentRecord> records;
    ResidualNetParams final_params;
    bool diverged = false;
    bool frozen = false;
    std::optional<double> final_train_loss;  // absent when diverged
};

// Minibatch SGD with momentum on softmax cross-entropy. Divergence
// (non-finite loss or activations) halts the run and is recorded, not
// thrown. A run is flagged frozen when the full-train loss stays within 1%
// of its initial value throughout the first 20% of steps.
TrainResult train(ResidualNetParams params, const ModelConfig& config, const TrainConfig& tc,
                  const Dataset& train_set, const Dataset& test_set,
                  LambdaRule rule_tag = LambdaRule::explicit_value);

struct ExplosionRecord {
    std::size_t n = 0;
    LambdaRule rule = LambdaRule::explicit_value;
    double lambda = 0.0;
    std::uint64_t seed = 0;
    double gain = 0.0;  // ||R(z)|| / ||z|| at a unit-norm probe
    std::vector<double> block_norms;
    bool diverged = false;
    std::size_t diverged_block = 0;
};

// Tower gain at random init, no training. Divergence is data, not failure.
std::vector<ExplosionRecord> explosion_sweep(std::span<const std::size_t> depths,
                                             std::span<const LambdaRule> rules,
                                             std::span<const std::uint64_t> seeds,
                                             const ModelConfig& config_template);

std::string explosion_to_csv(std::span<const ExplosionRecord> records);

struct CapacitySummary {
    double lambda = 0.0;
    double mean_max_test_acc = 0.0;
    double mean_gc_at_max = 0.0;
    bool any_diverged = false;
    std::size_t seeds = 0;
};

struct CapacitySweepResult {
    std::vector<ExperimentRecord> records;
    std::vector<CapacitySummary> summaries;  // one per lambda, input order
};

// Trains a fresh model per (lambda, seed) and summarizes max test accuracy
// and the GC at that step.
CapacitySweepResult lambda_capacity_sweep(std::span<const double> lambdas, std::size_t n,
                                          const ModelConfig& config_template,
                                          const TrainConfig& tc, const Dataset& train_set,
                                          const Dataset& test_set,
                                          std::span<const std::uint64_t> seeds,
                                          std::size_t jobs = 1);

struct EmbeddingReport {
    std::vector<std::size_t> extra_depths;
    std::vector<double> deviations;  // |loss(padded) - loss(original)| per depth
    double base_loss = 0.0;
    double max_abs_deviation = 0.0;
};

// Loss embedding check: zero-padded deeper nets must leave
// the dataset loss unchanged.
EmbeddingReport embedding_check(const ResidualNetParams& params, const ModelConfig& config,
                                const Dataset& data, std::span<const std::size_t> extra_depths);

nlohmann::ordered_json embedding_to_json(const EmbeddingReport& report);

}  // namespace resx
