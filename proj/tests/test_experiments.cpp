#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "resx/experiments.hpp"

using namespace resx;

namespace {

ModelConfig mlp_config(std::size_t n, double lambda, std::size_t d_in = 2,
                       std::size_t d_out = 2) {
    ModelConfig c;
    c.d_in = d_in;
    c.d_e = 16;
    c.d_h = 16;
    c.d_out = d_out;
    c.n = n;
    c.lambda = lambda;
    c.branch_kind = BranchKind::mlp;
    c.activation = ActKind::relu;
    return c;
}

std::string temp_path(const char* name) {
    return std::string("/tmp/resx_exp_") + name + "_" + std::to_string(::getpid());
}

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    REQUIRE(f.good());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void push_be_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>((v >> 24) & 0xFF));
    out.push_back(static_cast<char>((v >> 16) & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
    out.push_back(static_cast<char>(v & 0xFF));
}

// 4 images of 2x2 pixels plus matching labels, built byte-by-byte.
std::pair<std::string, std::string> idx_fixture() {
    std::string images;
    push_be_u32(images, 0x00000803u);
    push_be_u32(images, 4);
    push_be_u32(images, 2);
    push_be_u32(images, 2);
    for (int s = 0; s < 4; ++s) {
        for (int p = 0; p < 4; ++p) images.push_back(static_cast<char>(s * 60 + p * 5));
    }
    std::string labels;
    push_be_u32(labels, 0x00000801u);
    push_be_u32(labels, 4);
    for (int s = 0; s < 4; ++s) labels.push_back(static_cast<char>(s % 3));
    return {images, labels};
}

}  // namespace

TEST_CASE("make_synthetic is deterministic and splits 80/20") {
    auto [train_a, test_a] = make_synthetic(SyntheticKind::rings, 100, 2, 2, 0.05, 7);
    auto [train_b, test_b] = make_synthetic(SyntheticKind::rings, 100, 2, 2, 0.05, 7);
    CHECK(train_a.size() == 80);
    CHECK(test_a.size() == 20);
    CHECK(train_a.labels == train_b.labels);
    for (std::size_t i = 0; i < train_a.size(); ++i) {
        CHECK(train_a.inputs[i] == train_b.inputs[i]);
    }
    CHECK(test_a.labels == test_b.labels);

    auto [train_c, test_c] = make_synthetic(SyntheticKind::rings, 100, 2, 2, 0.05, 8);
    bool any_differs = false;
    for (std::size_t i = 0; i < train_a.size(); ++i) {
        any_differs = any_differs || !(train_a.inputs[i] == train_c.inputs[i]);
    }
    CHECK(any_differs);
}

TEST_CASE("noiseless blobs are linearly separable by the base model") {
    auto [train_set, test_set] = make_synthetic(SyntheticKind::blobs, 120, 2, 2, 0.0, 3);
    ModelConfig config = mlp_config(0, 0.0);
    Rng rng(1);
    ResidualNetParams params = ResidualNetParams::init(config, rng);

    TrainConfig tc;
    tc.steps = 300;
    tc.batch_size = 32;
    tc.learning_rate = 0.5;
    tc.seed = 1;
    TrainResult result = train(std::move(params), config, tc, train_set, test_set);
    CHECK_FALSE(result.diverged);
    CHECK(dataset_accuracy(result.final_params, config, test_set) == 1.0);
}

TEST_CASE("rings defeat any affine classifier") {
    auto [train_set, test_set] = make_synthetic(SyntheticKind::rings, 600, 2, 2, 0.04, 5);
    ModelConfig config = mlp_config(0, 0.0);
    Rng rng(2);
    ResidualNetParams params = ResidualNetParams::init(config, rng);

    TrainConfig tc;
    tc.steps = 1500;
    tc.batch_size = 64;
    tc.learning_rate = 0.3;
    tc.seed = 2;
    TrainResult result = train(std::move(params), config, tc, train_set, test_set);
    CHECK_FALSE(result.diverged);
    CHECK(dataset_accuracy(result.final_params, config, test_set) <= 0.70);
}

TEST_CASE("make_synthetic rejects bad arguments") {
    CHECK_THROWS_AS(make_synthetic(SyntheticKind::blobs, 3, 2, 2, 0.1, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_synthetic(SyntheticKind::blobs, 50, 1, 2, 0.1, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_synthetic(SyntheticKind::rings, 50, 2, 1, 0.1, 1), std::invalid_argument);
}

TEST_CASE("IDX fixture loads with known pixel values") {
    auto [images, labels] = idx_fixture();
    const std::string img_path = temp_path("idx_images");
    const std::string lbl_path = temp_path("idx_labels");
    write_bytes(img_path, images);
    write_bytes(lbl_path, labels);

    Dataset data = load_idx_images(img_path, lbl_path, 10);
    REQUIRE(data.size() == 4);
    CHECK(data.inputs[0].size() == 4);
    CHECK(data.inputs[0](0) == 0.0);
    CHECK(data.inputs[0](1) == 5.0 / 255.0);
    CHECK(data.inputs[3](3) == (3 * 60 + 3 * 5) / 255.0);
    CHECK(data.labels == std::vector<int>{0, 1, 2, 0});
    CHECK(data.classes == 3);

    Dataset limited = load_idx_images(img_path, lbl_path, 2);
    CHECK(limited.size() == 2);

    std::remove(img_path.c_str());
    std::remove(lbl_path.c_str());
}

TEST_CASE("IDX loader rejects malformed files") {
    auto [images, labels] = idx_fixture();
    const std::string img_path = temp_path("idx_bad_images");
    const std::string lbl_path = temp_path("idx_bad_labels");

    write_bytes(img_path, images);
    write_bytes(lbl_path, labels);
    CHECK_THROWS_AS(load_idx_images(img_path, lbl_path, 0), std::invalid_argument);

    std::string bad_magic = images;
    bad_magic[3] = 0x05;
    write_bytes(img_path, bad_magic);
    try {
        load_idx_images(img_path, lbl_path, 4);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 0);
    }

    write_bytes(img_path, images.substr(0, images.size() - 3));  // short payload
    write_bytes(lbl_path, labels);
    CHECK_THROWS_AS(load_idx_images(img_path, lbl_path, 4), FormatError);

    // count mismatch: 3 labels against 4 images
    std::string short_labels;
    push_be_u32(short_labels, 0x00000801u);
    push_be_u32(short_labels, 3);
    short_labels += std::string("\0\1\2", 3);
    write_bytes(img_path, images);
    write_bytes(lbl_path, short_labels);
    CHECK_THROWS_AS(load_idx_images(img_path, lbl_path, 4), FormatError);

    std::remove(img_path.c_str());
    std::remove(lbl_path.c_str());
}

TEST_CASE("vanishing learning rate leaves parameters unchanged") {
    auto [train_set, test_set] = make_synthetic(SyntheticKind::blobs, 60, 2, 2, 0.1, 4);
    ModelConfig config = mlp_config(2, 0.25);
    Rng rng(3);
    ResidualNetParams params = ResidualNetParams::init(config, rng);
    std::vector<Tensor> before(params.tensors().begin(), params.tensors().end());

    TrainConfig tc;
    tc.steps = 10;
    tc.batch_size = 16;
    tc.learning_rate = 1e-30;
    tc.seed = 3;
    TrainResult result = train(std::move(params), config, tc, train_set, test_set);
    for (std::size_t t = 0; t < before.size(); ++t) {
        const Tensor& after = result.final_params.tensors()[t];
        for (std::size_t i = 0; i < after.size(); ++i) {
            CHECK(std::abs(after.data()[i] - before[t].data()[i]) <= 1e-12);
        }
    }
    CHECK(result.frozen);  // loss cannot move at lr -> 0
}

TEST_CASE("blobs train to interpolation at lambda = 1/sqrt(n)") {
    auto [train_set, test_set] = make_synthetic(SyntheticKind::blobs, 300, 2, 2, 0.15, 6);
    const std::size_t n = 8;
    ModelConfig config = mlp_config(n, lambda_for(LambdaRule::inv_sqrt_n, n));
    Rng rng(4);
    ResidualNetParams params = ResidualNetParams::init(config, rng);

    TrainConfig tc;
    tc.steps = 2000;
    tc.batch_size = 64;
    tc.learning_rate = 0.05;
    tc.seed = 4;
    TrainResult result =
        train(std::move(params), config, tc, train_set, test_set, LambdaRule::inv_sqrt_n);
    CHECK_FALSE(result.diverged);
    REQUIRE(result.final_train_loss.has_value());
    CHECK(*result.final_train_loss < 0.1);
}

TEST_CASE("base model plateaus above the scaled residual run on rings") {
    auto [train_set, test_set] = make_synthetic(SyntheticKind::rings, 600, 2, 2, 0.04, 9);
    const std::size_t n = 8;
    TrainConfig tc;
    tc.steps = 1500;
    tc.batch_size = 64;
    tc.learning_rate = 0.05;
    tc.seed = 5;

    ModelConfig flat = mlp_config(n, 0.0);
    Rng rng_a(11);
    TrainResult base = train(ResidualNetParams::init(flat, rng_a), flat, tc, train_set, test_set);

    ModelConfig scaled = mlp_config(n, lambda_for(LambdaRule::inv_sqrt_n, n));
    Rng rng_b(11);
    TrainResult residual = train(ResidualNetParams::init(scaled, rng_b), scaled, tc, train_set,
                                 test_set, LambdaRule::inv_sqrt_n);

    REQUIRE(base.final_train_loss.has_value());
    REQUIRE(residual.final_train_loss.has_value());
    CHECK(*base.final_train_loss > *residual.final_train_loss);
}

TEST_CASE("training runs are deterministic given (seed, config)") {
    auto [train_set, test_set] = make_synthetic(SyntheticKind::rings, 200, 2, 2, 0.05, 10);
    ModelConfig config = mlp_config(4, 0.25);
    TrainConfig tc;
    tc.steps = 120;
    tc.batch_size = 32;
    tc.learning_rate = 0.05;
    tc.seed = 12;
    tc.gc_log_every = 40;
    tc.log_gc = true;
    tc.gc_subsample = 64;

    Rng rng_a(12);
    TrainResult a = train(ResidualNetParams::init(config, rng_a), config, tc, train_set, test_set);
    Rng rng_b(12);
    TrainResult b = train(ResidualNetParams::init(config, rng_b), config, tc, train_set, test_set);

    CHECK(records_to_csv(a.records) == records_to_csv(b.records));
    for (std::size_t t = 0; t < a.final_params.tensors().size(); ++t) {
        CHECK(a.final_params.tensors()[t] == b.final_params.tensors()[t]);
    }
}

TEST_CASE("divergence is recorded, not thrown, and metrics stop") {
    auto [train_set, test_set] = make_synthetic(SyntheticKind::rings, 200, 2, 2, 0.05, 13);
    ModelConfig config = mlp_config(64, 1.0);  // unscaled deep tower
    Rng rng(14);
    ResidualNetParams params = ResidualNetParams::init(config, rng);

    TrainConfig tc;
    tc.steps = 50;
    tc.batch_size = 32;
    tc.learning_rate = 0.05;
    tc.seed = 14;
    TrainResult result = train(std::move(params), config, tc, train_set, test_set);
    CHECK(result.diverged);
    CHECK_FALSE(result.final_train_loss.has_value());
    REQUIRE_FALSE(result.records.empty());
    const ExperimentRecord& last = result.records.back();
    CHECK(last.diverged);
    CHECK_FALSE(last.train_loss.has_value());
    CHECK_FALSE(last.test_acc.has_value());
    CHECK_FALSE(last.gc.has_value());
}

TEST_CASE("explosion sweep separates the three scaling rules") {
    ModelConfig tmpl = mlp_config(0, 0.0);
    const std::vector<std::size_t> depths{8, 32};
    const std::vector<LambdaRule> rules{LambdaRule::one, LambdaRule::inv_n};
    const std::vector<std::uint64_t> seeds{1, 2};
    auto records = explosion_sweep(depths, rules, seeds, tmpl);
    CHECK(records.size() == depths.size() * rules.size() * seeds.size());

    for (const auto& rec : records) {
        if (rec.rule == LambdaRule::inv_n) {
            CHECK_FALSE(rec.diverged);
            CHECK(rec.gain < 4.0);
        }
        if (!rec.diverged) CHECK(rec.block_norms.size() == rec.n);
    }

    // lambda = 1 with identity-like growth: gain is exactly 2^n for A_i = I.
    ModelConfig linear_tmpl = tmpl;
    linear_tmpl.branch_kind = BranchKind::linear;
    linear_tmpl.d_e = 4;
    ModelConfig c = linear_tmpl;
    c.n = 10;
    c.lambda = 1.0;
    ResidualNetParams identity_params = ResidualNetParams::zeros(c);
    for (std::size_t i = 0; i < c.n; ++i) {
        identity_params.branch_tensor(i, 0) = Tensor::identity(c.d_e);
    }
    Tensor z = Tensor::basis(c.d_e, 0);
    TowerResult tower = residual_tower(identity_params, c, z);
    CHECK(tower.output(0) == 1024.0);
}

TEST_CASE("inv_n explosion gain is depth-independent for bounded linear branches") {
    ModelConfig tmpl = mlp_config(0, 0.0);
    tmpl.branch_kind = BranchKind::linear;
    const std::vector<std::size_t> depths{8, 32, 128, 256};
    const std::vector<LambdaRule> rules{LambdaRule::inv_n};
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    auto records = explosion_sweep(depths, rules, seeds, tmpl);

    for (std::uint64_t seed : seeds) {
        double min_gain = std::numeric_limits<double>::infinity();
        double max_gain = 0.0;
        for (const auto& rec : records) {
            if (rec.seed != seed) continue;
            REQUIRE_FALSE(rec.diverged);
            min_gain = std::min(min_gain, rec.gain);
            max_gain = std::max(max_gain, rec.gain);
        }
        CHECK(max_gain <= 2.0 * min_gain);
    }
}

TEST_CASE("explosion CSV has one row per (depth, rule, seed)") {
    ModelConfig tmpl = mlp_config(0, 0.0);
    const std::vector<std::size_t> depths{8, 16, 32};
    const std::vector<LambdaRule> rules{LambdaRule::one, LambdaRule::inv_n,
                                        LambdaRule::inv_sqrt_n};
    const std::vector<std::uint64_t> seeds{1};
    auto records = explosion_sweep(depths, rules, seeds, tmpl);
    const std::string csv = explosion_to_csv(records);
    const std::size_t lines = static_cast<std::size_t>(
        std::count(csv.begin(), csv.end(), '\n'));
    CHECK(lines == 1 + depths.size() * rules.size() * seeds.size());
}

TEST_CASE("embedding check reports zero deviation for zero padding") {
    auto [train_set, test_set] = make_synthetic(SyntheticKind::rings, 150, 2, 2, 0.05, 15);
    ModelConfig config = mlp_config(3, 0.3);
    Rng rng(16);
    ResidualNetParams params = ResidualNetParams::init(config, rng);

    const std::vector<std::size_t> extras{1, 32};
    EmbeddingReport report = embedding_check(params, config, train_set, extras);
    CHECK(report.max_abs_deviation < 1e-12);
    CHECK(report.deviations.size() == 2);

    nlohmann::ordered_json j = embedding_to_json(report);
    CHECK(j["max_abs_deviation"].get<double>() < 1e-12);
}

TEST_CASE("training a padded net with small steps cannot regress the loss") {
    auto [train_set, test_set] = make_synthetic(SyntheticKind::rings, 200, 2, 2, 0.05, 17);
    ModelConfig config = mlp_config(4, 0.25);
    Rng rng(18);
    ResidualNetParams params = ResidualNetParams::init(config, rng);
    const double frozen_loss = dataset_loss(params, config, train_set);

    auto [padded, padded_config] = zero_pad_depth(params, config, 2);
    TrainConfig tc;
    tc.steps = 100;
    tc.batch_size = 32;
    tc.learning_rate = 1e-3;
    tc.seed = 19;
    TrainResult result = train(std::move(padded), padded_config, tc, train_set, test_set);
    REQUIRE(result.final_train_loss.has_value());
    CHECK(*result.final_train_loss <= frozen_loss + 1e-6);
}

TEST_CASE("capacity sweep summarizes per-lambda peaks in input order") {
    auto [train_set, test_set] = make_synthetic(SyntheticKind::rings, 300, 2, 2, 0.05, 20);
    ModelConfig tmpl = mlp_config(0, 0.0);
    TrainConfig tc;
    tc.steps = 200;
    tc.batch_size = 32;
    tc.learning_rate = 0.05;
    tc.gc_log_every = 100;
    tc.log_gc = true;
    tc.gc_subsample = 32;

    const std::vector<double> lambdas{0.0, 0.25};
    const std::vector<std::uint64_t> seeds{1, 2};
    CapacitySweepResult result =
        lambda_capacity_sweep(lambdas, 4, tmpl, tc, train_set, test_set, seeds, 2);

    REQUIRE(result.summaries.size() == 2);
    CHECK(result.summaries[0].lambda == 0.0);
    CHECK(result.summaries[1].lambda == 0.25);
    for (const auto& s : result.summaries) {
        CHECK(s.seeds == 2);
        CHECK(s.mean_max_test_acc > 0.0);
    }

    // GC-during-training curves exist and contain no NaN for non-diverged runs.
    std::size_t gc_records = 0;
    for (const auto& r : result.records) {
        if (r.gc.has_value()) {
            CHECK(std::isfinite(*r.gc));
            ++gc_records;
        }
    }
    CHECK(gc_records > 0);

    const std::vector<double> unsorted{0.25, 0.0};
    CHECK_THROWS_AS(
        lambda_capacity_sweep(unsorted, 4, tmpl, tc, train_set, test_set, seeds, 1),
        std::invalid_argument);
}

TEST_CASE("capacity sweep flags lambdas past the divergence threshold") {
    auto [train_set, test_set] = make_synthetic(SyntheticKind::rings, 200, 2, 2, 0.05, 21);
    ModelConfig tmpl = mlp_config(0, 0.0);
    TrainConfig tc;
    tc.steps = 60;
    tc.batch_size = 32;
    tc.learning_rate = 0.05;

    const std::vector<double> lambdas{0.0625, 8.0};
    const std::vector<std::uint64_t> seeds{1};
    CapacitySweepResult result =
        lambda_capacity_sweep(lambdas, 16, tmpl, tc, train_set, test_set, seeds, 1);
    REQUIRE(result.summaries.size() == 2);
    CHECK_FALSE(result.summaries[0].any_diverged);
    CHECK(result.summaries[1].any_diverged);
}

TEST_CASE("records CSV uses the documented header and empty missing fields") {
    ExperimentRecord r;
    r.n = 8;
    r.rule = LambdaRule::inv_n;
    r.lambda = 0.125;
    r.seed = 3;
    r.step = 100;
    r.train_loss = 0.5;
    r.diverged = false;
    r.frozen = false;
    const std::vector<ExperimentRecord> records{r};
    const std::string csv = records_to_csv(records);
    CHECK(csv.find("n,lambda_rule,lambda,seed,step,train_loss,test_acc,gc,diverged,frozen\n") ==
          0);
    CHECK(csv.find("8,inv_n,0.125,3,100,0.5,,,0,0\n") != std::string::npos);
}
