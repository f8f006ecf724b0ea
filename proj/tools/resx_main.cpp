// Command-line front end: every verification and experiment as a
// subcommand, emitting deterministic CSV/JSON plus simple SVG charts.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "resx/complexity.hpp"
#include "resx/expansion.hpp"
#include "resx/experiments.hpp"
#include "resx/io.hpp"
#include "resx/model.hpp"
#include "resx/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace resx;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::string default_out_dir() {
    const char* env = std::getenv("RESX_OUT");
    return env != nullptr && *env != '\0' ? env : "out";
}

std::vector<double> parse_doubles(const std::string& csv) {
    std::vector<double> values;
    std::size_t pos = 0;
    while (pos <= csv.size()) {
        const std::size_t comma = csv.find(',', pos);
        const std::string token = csv.substr(pos, comma == std::string::npos ? comma : comma - pos);
        if (!token.empty()) values.push_back(std::stod(token));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (values.empty()) throw std::invalid_argument("empty numeric list: '" + csv + "'");
    return values;
}

std::vector<std::size_t> parse_sizes(const std::string& csv) {
    std::vector<std::size_t> values;
    for (double v : parse_doubles(csv)) {
        if (v < 0 || v != std::floor(v)) {
            throw std::invalid_argument("expected non-negative integers: '" + csv + "'");
        }
        values.push_back(static_cast<std::size_t>(v));
    }
    return values;
}

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
    std::vector<std::uint64_t> seeds;
    for (std::size_t v : parse_sizes(csv)) seeds.push_back(v);
    return seeds;
}

void ensure_dir(const std::string& dir) {
    fs::create_directories(dir);
}

ordered_json config_to_json(const ModelConfig& config) {
    return ordered_json{
        {"d_in", config.d_in},     {"d_e", config.d_e},
        {"d_h", config.d_h},       {"d_out", config.d_out},
        {"n", config.n},           {"lambda", config.lambda},
        {"branch", branch_name(config.branch_kind)},
        {"activation", act_name(config.activation)},
    };
}

// Shared model/data flags for the training-style subcommands.
struct DataFlags {
    std::string data = "rings";
    std::size_t samples = 768;
    std::size_t classes = 2;
    std::size_t d_in = 2;
    double noise = 0.05;
    std::string idx_images;
    std::string idx_labels;
    std::size_t idx_limit = 1024;

    void attach(CLI::App* cmd) {
        cmd->add_option("--data", data, "dataset: blobs, rings, or idx")
            ->check(CLI::IsMember({"blobs", "rings", "idx"}));
        cmd->add_option("--samples", samples, "synthetic sample count (train+test)");
        cmd->add_option("--classes", classes, "synthetic class count");
        cmd->add_option("--d-in", d_in, "input width for synthetic data");
        cmd->add_option("--noise", noise, "synthetic noise level");
        cmd->add_option("--idx-images", idx_images, "IDX image file (data=idx)");
        cmd->add_option("--idx-labels", idx_labels, "IDX label file (data=idx)");
        cmd->add_option("--idx-limit", idx_limit, "IDX sample cap");
    }

    // (train, test) built deterministically from `seed`.
    std::pair<Dataset, Dataset> load(std::uint64_t seed) const {
        if (data == "idx") {
            if (idx_images.empty() || idx_labels.empty()) {
                throw std::invalid_argument("--data idx requires --idx-images and --idx-labels");
            }
            Dataset all = load_idx_images(idx_images, idx_labels, idx_limit);
            // 80/20 split in file order.
            const std::size_t train_count = std::max<std::size_t>(1, (all.size() * 8) / 10);
            Dataset train_set, test_set;
            train_set.split = SplitTag::train;
            test_set.split = SplitTag::test;
            train_set.classes = test_set.classes = all.classes;
            for (std::size_t i = 0; i < all.size(); ++i) {
                Dataset& target = i < train_count ? train_set : test_set;
                target.inputs.push_back(all.inputs[i]);
                target.labels.push_back(all.labels[i]);
            }
            if (test_set.inputs.empty()) {
                test_set.inputs.push_back(train_set.inputs.back());
                test_set.labels.push_back(train_set.labels.back());
            }
            train_set.validate();
            test_set.validate();
            return {std::move(train_set), std::move(test_set)};
        }
        return make_synthetic(synthetic_from_name(data), samples, classes, d_in, noise, seed);
    }

    std::size_t input_width() const {
        return data == "idx" ? 0 : d_in;  // 0 = derive from loaded data
    }
};

struct VerifyArgs {
    std::size_t n = 6;
    std::string branch = "mlp";
    std::string activation = "tanh";
    std::string lambda_grid = "0.0625,0.03125,0.015625,0.0078125,0.00390625,0.001953125";
    std::string seeds = "1";
    std::size_t d_e = 16;
    std::string out_dir = default_out_dir();
};

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double count = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    return (count * sxy - sx * sy) / (count * sxx - sx * sx);
}

int cmd_verify_expansion(const VerifyArgs& args) {
    const BranchKind kind = branch_from_name(args.branch);
    const std::vector<double> grid = parse_doubles(args.lambda_grid);
    const std::vector<std::uint64_t> seeds = parse_seeds(args.seeds);
    if (kind == BranchKind::linear && args.n > 20) {
        throw std::invalid_argument("linear path enumeration capped at n = 20, got n = " +
                                    std::to_string(args.n));
    }

    ModelConfig base;
    base.d_in = args.d_e;
    base.d_e = args.d_e;
    base.d_h = args.d_e;
    base.d_out = args.d_e;
    base.n = args.n;
    base.branch_kind = kind;
    base.activation = act_from_name(args.activation);

    ordered_json report{{"branch", args.branch},
                        {"n", args.n},
                        {"lambda_grid", grid},
                        {"checks", ordered_json::array()}};
    bool all_pass = true;

    for (std::uint64_t seed : seeds) {
        Rng rng(seed);
        ResidualNetParams params = ResidualNetParams::init(base, rng);
        Rng probe_rng = Rng(seed).split(7);
        Tensor x = gaussian(probe_rng, base.d_in, 1.0);
        x = scale(x, 1.0 / norm2(x));

        if (kind == BranchKind::linear) {
            ModelConfig config = base;
            config.lambda = grid.front();
            Tensor z = add(matmul(params.enc_w(), x), params.enc_b());
            auto terms = enumerate_paths_linear(params, config, z);
            Tensor sum = Tensor::zeros(config.d_e);
            std::vector<std::uint64_t> histogram(config.n + 1, 0);
            for (const auto& [subset, term] : terms) {
                sum = add(sum, term);
                ++histogram[subset.size()];
            }
            const Tensor tower = residual_tower(params, config, z).output;
            const double rel_err = norm2(sub(sum, tower)) / std::max(1e-300, norm2(tower));

            bool histogram_ok = terms.size() == total_paths(static_cast<unsigned>(config.n));
            for (unsigned k = 0; k <= config.n; ++k) {
                histogram_ok =
                    histogram_ok && histogram[k] == path_count(static_cast<unsigned>(config.n), k);
            }
            const bool pass = rel_err < 1e-10 && histogram_ok;
            all_pass = all_pass && pass;
            std::printf("[%s] seed %llu path enumeration: relative error %.3e, %zu subsets\n",
                        pass ? "PASS" : "FAIL", static_cast<unsigned long long>(seed), rel_err,
                        terms.size());
            report["checks"].push_back(ordered_json{{"seed", seed},
                                                    {"kind", "path_enumeration"},
                                                    {"relative_error", rel_err},
                                                    {"subsets", terms.size()},
                                                    {"histogram_ok", histogram_ok},
                                                    {"pass", pass}});
        } else {
            std::vector<double> log_lambda;
            std::vector<std::array<double, 3>> log_rem;
            for (double lambda : grid) {
                ModelConfig config = base;
                config.lambda = lambda;
                ExpansionReport er = expand(params, config, x);
                log_lambda.push_back(std::log(lambda));
                log_rem.push_back({std::log(er.remainder_norms[0]),
                                   std::log(er.remainder_norms[1]),
                                   std::log(er.remainder_norms[2])});
            }
            std::array<double, 3> slopes{};
            bool pass = true;
            for (int k = 0; k < 3; ++k) {
                std::vector<double> y;
                for (const auto& r : log_rem) y.push_back(r[k]);
                slopes[k] = fit_slope(log_lambda, y);
                pass = pass && std::abs(slopes[k] - (k + 1)) <= 0.25;
            }
            all_pass = all_pass && pass;
            std::printf("[%s] seed %llu remainder slopes: %.3f %.3f %.3f (want 1, 2, 3)\n",
                        pass ? "PASS" : "FAIL", static_cast<unsigned long long>(seed), slopes[0],
                        slopes[1], slopes[2]);
            report["checks"].push_back(ordered_json{{"seed", seed},
                                                    {"kind", "remainder_slopes"},
                                                    {"slopes", slopes},
                                                    {"pass", pass}});
        }
    }

    report["pass"] = all_pass;
    ensure_dir(args.out_dir);
    write_file(args.out_dir + "/verify_expansion.json", report.dump(2) + "\n");
    std::printf("%s\n", all_pass ? "PASS" : "FAIL");
    return all_pass ? kExitOk : kExitRuntime;
}

struct SweepArgs {
    std::string mode = "explosion";
    std::string depths = "8,32,128,256";
    std::string rules = "one,inv_n,inv_sqrt_n";
    std::string seeds = "1,2,3";
    std::string lambdas;  // capacity mode
    std::size_t n = 16;
    std::size_t d_e = 16;
    std::size_t d_h = 16;
    std::size_t steps = 2000;
    std::size_t batch = 64;
    double lr = 0.05;
    double momentum = 0.9;
    std::size_t gc_log_every = 0;
    std::size_t gc_subsample = 512;
    std::size_t jobs = 1;
    std::string out_dir = default_out_dir();
    DataFlags data;
};

std::vector<LambdaRule> parse_rules(const std::string& csv) {
    std::vector<LambdaRule> rules;
    std::size_t pos = 0;
    while (pos <= csv.size()) {
        const std::size_t comma = csv.find(',', pos);
        const std::string token = csv.substr(pos, comma == std::string::npos ? comma : comma - pos);
        if (!token.empty()) rules.push_back(rule_from_name(token));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (rules.empty()) throw std::invalid_argument("empty rule list");
    return rules;
}

int cmd_sweep(const SweepArgs& args) {
    ensure_dir(args.out_dir);
    const std::vector<std::uint64_t> seeds = parse_seeds(args.seeds);

    if (args.mode == "explosion") {
        const std::vector<std::size_t> depths = parse_sizes(args.depths);
        const std::vector<LambdaRule> rules = parse_rules(args.rules);
        ModelConfig tmpl;
        tmpl.d_in = args.d_e;
        tmpl.d_e = args.d_e;
        tmpl.d_h = args.d_h;
        tmpl.d_out = args.d_e;
        tmpl.branch_kind = BranchKind::mlp;
        tmpl.activation = ActKind::relu;

        auto records = explosion_sweep(depths, rules, seeds, tmpl);
        write_file(args.out_dir + "/explosion.csv", explosion_to_csv(records));

        // per-block norm profiles, one row per block
        std::string profiles = "n,lambda_rule,lambda,seed,block,norm\n";
        for (const auto& rec : records) {
            for (std::size_t b = 0; b < rec.block_norms.size(); ++b) {
                profiles += std::to_string(rec.n) + "," + rule_name(rec.rule) + "," +
                            fmt17(rec.lambda) + "," + std::to_string(rec.seed) + "," +
                            std::to_string(b + 1) + "," + fmt17(rec.block_norms[b]) + "\n";
            }
        }
        write_file(args.out_dir + "/explosion_profiles.csv", profiles);

        // chart: mean gain vs depth, one series per rule (diverged runs skipped)
        std::vector<ChartSeries> series;
        for (LambdaRule rule : rules) {
            ChartSeries s{rule_name(rule), {}};
            for (std::size_t n : depths) {
                double sum = 0.0;
                std::size_t count = 0;
                for (const auto& rec : records) {
                    if (rec.n == n && rec.rule == rule && !rec.diverged) {
                        sum += rec.gain;
                        ++count;
                    }
                }
                if (count > 0) s.points.emplace_back(static_cast<double>(n),
                                                     sum / static_cast<double>(count));
            }
            series.push_back(std::move(s));
        }
        ChartOptions options;
        options.title = "residual tower gain vs depth";
        options.x_label = "n";
        options.y_label = "gain";
        options.log_y = true;
        write_file(args.out_dir + "/explosion.svg", render_line_chart(options, series));
        std::printf("explosion sweep: %zu records -> %s\n", records.size(), args.out_dir.c_str());
        return kExitOk;
    }

    if (args.mode == "train") {
        const std::vector<std::size_t> depths = parse_sizes(args.depths);
        const std::vector<LambdaRule> rules = parse_rules(args.rules);
        auto [train_set, test_set] = args.data.load(seeds.front());

        struct Task {
            std::size_t n;
            LambdaRule rule;
            std::uint64_t seed;
        };
        std::vector<Task> tasks;
        for (std::size_t n : depths) {
            for (LambdaRule rule : rules) {
                for (std::uint64_t seed : seeds) tasks.push_back({n, rule, seed});
            }
        }
        std::vector<TrainResult> results(tasks.size());
        parallel_for(args.jobs, tasks.size(), [&](std::size_t t) {
            ModelConfig config;
            config.d_in = train_set.inputs.front().size();
            config.d_e = args.d_e;
            config.d_h = args.d_h;
            config.d_out = train_set.classes;
            config.n = tasks[t].n;
            config.lambda = lambda_for(tasks[t].rule, tasks[t].n);
            config.branch_kind = BranchKind::mlp;
            config.activation = ActKind::relu;

            TrainConfig tc;
            tc.steps = args.steps;
            tc.batch_size = args.batch;
            tc.learning_rate = args.lr;
            tc.momentum = args.momentum;
            tc.seed = tasks[t].seed;
            tc.gc_log_every = args.gc_log_every;
            tc.log_gc = args.gc_log_every > 0;
            tc.gc_subsample = args.gc_subsample;

            Rng init_rng(tasks[t].seed);
            results[t] = train(ResidualNetParams::init(config, init_rng), config, tc, train_set,
                               test_set, tasks[t].rule);
        });

        std::vector<ExperimentRecord> records;
        std::vector<ChartSeries> series;
        for (std::size_t t = 0; t < tasks.size(); ++t) {
            ChartSeries s{std::to_string(tasks[t].n) + "/" + rule_name(tasks[t].rule) + "/s" +
                              std::to_string(tasks[t].seed),
                          {}};
            for (const auto& r : results[t].records) {
                records.push_back(r);
                if (r.train_loss.has_value()) {
                    s.points.emplace_back(static_cast<double>(r.step), *r.train_loss);
                }
            }
            series.push_back(std::move(s));
        }
        write_file(args.out_dir + "/train_sweep.csv", records_to_csv(records));
        ChartOptions options;
        options.title = "train loss vs step";
        options.x_label = "step";
        options.y_label = "train loss";
        write_file(args.out_dir + "/train_sweep.svg", render_line_chart(options, series));
        std::printf("train sweep: %zu runs -> %s\n", tasks.size(), args.out_dir.c_str());
        return kExitOk;
    }

    if (args.mode == "capacity") {
        if (args.lambdas.empty()) {
            throw std::invalid_argument("capacity mode requires --lambdas");
        }
        const std::vector<double> lambdas = parse_doubles(args.lambdas);
        auto [train_set, test_set] = args.data.load(seeds.front());

        ModelConfig tmpl;
        tmpl.d_in = train_set.inputs.front().size();
        tmpl.d_e = args.d_e;
        tmpl.d_h = args.d_h;
        tmpl.d_out = train_set.classes;
        tmpl.branch_kind = BranchKind::mlp;
        tmpl.activation = ActKind::relu;

        TrainConfig tc;
        tc.steps = args.steps;
        tc.batch_size = args.batch;
        tc.learning_rate = args.lr;
        tc.momentum = args.momentum;
        tc.gc_log_every = args.gc_log_every > 0 ? args.gc_log_every : args.steps / 10;
        tc.log_gc = true;
        tc.gc_subsample = args.gc_subsample;

        CapacitySweepResult result =
            lambda_capacity_sweep(lambdas, args.n, tmpl, tc, train_set, test_set, seeds, args.jobs);
        write_file(args.out_dir + "/capacity.csv", records_to_csv(result.records));

        ordered_json summary = ordered_json::array();
        ChartSeries acc_series{"max test acc", {}};
        ChartSeries gc_series{"gc at max acc", {}};
        for (const auto& s : result.summaries) {
            summary.push_back(ordered_json{{"lambda", s.lambda},
                                           {"mean_max_test_acc", s.mean_max_test_acc},
                                           {"mean_gc_at_max", s.mean_gc_at_max},
                                           {"any_diverged", s.any_diverged},
                                           {"seeds", s.seeds}});
            acc_series.points.emplace_back(s.lambda, s.mean_max_test_acc);
            gc_series.points.emplace_back(s.lambda, s.mean_gc_at_max);
        }
        write_file(args.out_dir + "/capacity_summary.json", summary.dump(2) + "\n");

        ChartOptions acc_options;
        acc_options.title = "max test accuracy vs lambda";
        acc_options.x_label = "lambda";
        acc_options.y_label = "accuracy";
        write_file(args.out_dir + "/capacity_accuracy.svg",
                   render_line_chart(acc_options, {acc_series}));
        ChartOptions gc_options;
        gc_options.title = "geometric complexity at max accuracy vs lambda";
        gc_options.x_label = "lambda";
        gc_options.y_label = "gc";
        write_file(args.out_dir + "/capacity_gc.svg", render_line_chart(gc_options, {gc_series}));
        std::printf("capacity sweep: %zu lambdas -> %s\n", lambdas.size(), args.out_dir.c_str());
        return kExitOk;
    }

    throw std::invalid_argument("unknown sweep mode: " + args.mode);
}

struct TrainArgs {
    std::string rule = "inv_sqrt_n";
    double lambda = 0.0;  // used when rule = explicit
    std::size_t n = 8;
    std::size_t d_e = 16;
    std::size_t d_h = 16;
    std::size_t steps = 2000;
    std::size_t batch = 64;
    double lr = 0.05;
    double momentum = 0.9;
    std::uint64_t seed = 1;
    std::size_t gc_log_every = 0;
    bool log_gc = false;
    std::size_t gc_subsample = 512;
    std::string out_dir = default_out_dir();
    DataFlags data;
};

int cmd_train(const TrainArgs& args) {
    ensure_dir(args.out_dir);
    auto [train_set, test_set] = args.data.load(args.seed);

    ModelConfig config;
    config.d_in = train_set.inputs.front().size();
    config.d_e = args.d_e;
    config.d_h = args.d_h;
    config.d_out = train_set.classes;
    config.n = args.n;
    const LambdaRule rule = rule_from_name(args.rule);
    config.lambda = lambda_for(rule, args.n, args.lambda);
    config.branch_kind = BranchKind::mlp;
    config.activation = ActKind::relu;

    TrainConfig tc;
    tc.steps = args.steps;
    tc.batch_size = args.batch;
    tc.learning_rate = args.lr;
    tc.momentum = args.momentum;
    tc.seed = args.seed;
    tc.gc_log_every = args.gc_log_every;
    tc.log_gc = args.log_gc && args.gc_log_every > 0;
    tc.gc_subsample = args.gc_subsample;

    Rng init_rng(args.seed);
    TrainResult result =
        train(ResidualNetParams::init(config, init_rng), config, tc, train_set, test_set, rule);

    write_file(args.out_dir + "/train.csv", records_to_csv(result.records));
    const std::string ckpt_path = args.out_dir + "/model.resx";
    save_checkpoint(ckpt_path, result.final_params, config);

    ordered_json summary{
        {"config", config_to_json(config)},
        {"train",
         ordered_json{{"rule", args.rule},
                      {"steps", tc.steps},
                      {"batch_size", tc.batch_size},
                      {"learning_rate", tc.learning_rate},
                      {"momentum", tc.momentum},
                      {"seed", tc.seed},
                      {"gc_log_every", tc.gc_log_every}}},
        {"result",
         ordered_json{{"diverged", result.diverged},
                      {"frozen", result.frozen},
                      {"final_train_loss",
                       result.final_train_loss.has_value() ? ordered_json(*result.final_train_loss)
                                                           : ordered_json(nullptr)}}},
        {"checkpoint",
         ordered_json{{"path", ckpt_path}, {"content_hash", git_blob_hash(read_file(ckpt_path))}}},
    };
    write_file(args.out_dir + "/train_summary.json", summary.dump(2) + "\n");

    std::printf("train: diverged=%d frozen=%d final_loss=%s -> %s\n", result.diverged ? 1 : 0,
                result.frozen ? 1 : 0,
                result.final_train_loss.has_value() ? fmt17(*result.final_train_loss).c_str()
                                                    : "n/a",
                args.out_dir.c_str());
    return kExitOk;
}

struct ModelSource {
    std::string checkpoint;
    std::size_t n = 4;
    std::size_t d_in = 2;
    std::size_t d_e = 16;
    std::size_t d_h = 16;
    std::size_t d_out = 2;
    double lambda = 0.25;
    std::string branch = "mlp";
    std::string activation = "relu";
    std::uint64_t seed = 1;

    void attach(CLI::App* cmd) {
        cmd->add_option("--checkpoint", checkpoint, "load parameters from a checkpoint");
        cmd->add_option("--n", n, "blocks (fresh init)");
        cmd->add_option("--d-e", d_e, "embedding width (fresh init)");
        cmd->add_option("--d-h", d_h, "branch hidden width (fresh init)");
        cmd->add_option("--d-out", d_out, "output width (fresh init)");
        cmd->add_option("--lambda", lambda, "branch scale (fresh init)");
        cmd->add_option("--branch", branch, "branch kind (fresh init)")
            ->check(CLI::IsMember({"linear", "mlp"}));
        cmd->add_option("--activation", activation, "branch activation (fresh init)")
            ->check(CLI::IsMember({"relu", "tanh", "identity"}));
        cmd->add_option("--seed", seed, "init seed");
    }

    // Fresh inits take their input width from the dataset.
    std::pair<ResidualNetParams, ModelConfig> realize(std::size_t data_d_in) const {
        if (!checkpoint.empty()) {
            if (!fs::exists(checkpoint)) {
                throw std::invalid_argument("checkpoint not found: " + checkpoint);
            }
            return load_checkpoint(checkpoint);
        }
        ModelConfig config;
        config.d_in = data_d_in != 0 ? data_d_in : d_in;
        config.d_e = d_e;
        config.d_h = d_h;
        config.d_out = d_out;
        config.n = n;
        config.lambda = lambda;
        config.branch_kind = branch_from_name(branch);
        config.activation = act_from_name(activation);
        Rng rng(seed);
        return {ResidualNetParams::init(config, rng), config};
    }
};

int cmd_gc(const ModelSource& source, const DataFlags& data, std::size_t gc_subsample,
           const std::string& out_dir) {
    ensure_dir(out_dir);
    auto [train_set, test_set] = data.load(source.seed);
    auto [params, config] = source.realize(train_set.inputs.front().size());
    if (train_set.inputs.front().size() != config.d_in) {
        throw std::invalid_argument("dataset width does not match model d_in");
    }

    std::vector<Tensor> inputs = train_set.inputs;
    if (gc_subsample > 0 && gc_subsample < inputs.size()) inputs.resize(gc_subsample);

    GcReport report = gc_first_order(params, config, inputs);
    ordered_json j{{"config", config_to_json(config)}, {"gc", gc_to_json(report)}};
    write_file(out_dir + "/gc.json", j.dump(2) + "\n");
    std::printf("%s\n", gc_to_json(report).dump().c_str());
    return kExitOk;
}

int cmd_embed(const ModelSource& source, const DataFlags& data, const std::string& extras_csv,
              const std::string& out_dir) {
    ensure_dir(out_dir);
    auto [train_set, test_set] = data.load(source.seed);
    auto [params, config] = source.realize(train_set.inputs.front().size());
    if (train_set.inputs.front().size() != config.d_in) {
        throw std::invalid_argument("dataset width does not match model d_in");
    }
    if (train_set.classes > config.d_out) {
        throw std::invalid_argument("dataset classes exceed model d_out");
    }

    const std::vector<std::size_t> extras = parse_sizes(extras_csv);
    EmbeddingReport report = embedding_check(params, config, train_set, extras);
    ordered_json j{{"config", config_to_json(config)}, {"embedding", embedding_to_json(report)}};
    write_file(out_dir + "/embed.json", j.dump(2) + "\n");
    std::printf("max loss deviation over %zu paddings: %s\n", extras.size(),
                fmt17(report.max_abs_deviation).c_str());
    return kExitOk;
}

int cmd_paths(std::size_t n) {
    std::printf("k,C(%zu,k)\n", n);
    for (unsigned k = 0; k <= n; ++k) {
        std::printf("%u,%llu\n", k,
                    static_cast<unsigned long long>(path_count(static_cast<unsigned>(n), k)));
    }
    std::printf("total,%llu\n",
                static_cast<unsigned long long>(total_paths(static_cast<unsigned>(n))));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"scaled residual network expansion toolkit"};
    app.require_subcommand(1);

    VerifyArgs verify_args;
    CLI::App* verify = app.add_subcommand("verify-expansion",
                                          "check the ensemble expansion against exact forwards");
    verify->add_option("--n", verify_args.n, "residual blocks");
    verify->add_option("--branch", verify_args.branch, "branch kind")
        ->check(CLI::IsMember({"linear", "mlp"}));
    verify->add_option("--activation", verify_args.activation, "branch activation")
        ->check(CLI::IsMember({"relu", "tanh", "identity"}));
    verify->add_option("--lambda-grid", verify_args.lambda_grid, "comma-separated lambda grid");
    verify->add_option("--seeds", verify_args.seeds, "comma-separated seeds");
    verify->add_option("--seed", verify_args.seeds, "single seed (alias of --seeds)");
    verify->add_option("--d-e", verify_args.d_e, "embedding width");
    verify->add_option("--out", verify_args.out_dir, "output directory");

    SweepArgs sweep_args;
    CLI::App* sweep = app.add_subcommand("sweep", "explosion / train / capacity sweeps");
    sweep->add_option("--mode", sweep_args.mode, "sweep mode")
        ->check(CLI::IsMember({"explosion", "train", "capacity"}));
    sweep->add_option("--depths", sweep_args.depths, "comma-separated depths");
    sweep->add_option("--rules", sweep_args.rules, "comma-separated lambda rules");
    sweep->add_option("--seeds", sweep_args.seeds, "comma-separated seeds");
    sweep->add_option("--lambdas", sweep_args.lambdas, "comma-separated lambdas (capacity)");
    sweep->add_option("--n", sweep_args.n, "depth for capacity mode");
    sweep->add_option("--d-e", sweep_args.d_e, "embedding width");
    sweep->add_option("--d-h", sweep_args.d_h, "branch hidden width");
    sweep->add_option("--steps", sweep_args.steps, "training steps");
    sweep->add_option("--batch", sweep_args.batch, "batch size");
    sweep->add_option("--lr", sweep_args.lr, "learning rate");
    sweep->add_option("--momentum", sweep_args.momentum, "SGD momentum");
    sweep->add_option("--gc-log-every", sweep_args.gc_log_every, "metric record cadence");
    sweep->add_option("--gc-subsample", sweep_args.gc_subsample, "GC subsample cap");
    sweep->add_option("--jobs", sweep_args.jobs, "parallel worker slots");
    sweep->add_option("--out", sweep_args.out_dir, "output directory");
    sweep_args.data.attach(sweep);

    TrainArgs train_args;
    CLI::App* train_cmd = app.add_subcommand("train", "single training run");
    train_cmd->add_option("--rule", train_args.rule, "lambda rule")
        ->check(CLI::IsMember({"one", "inv_n", "inv_sqrt_n", "explicit"}));
    train_cmd->add_option("--lambda", train_args.lambda, "lambda (rule = explicit)");
    train_cmd->add_option("--n", train_args.n, "residual blocks");
    train_cmd->add_option("--d-e", train_args.d_e, "embedding width");
    train_cmd->add_option("--d-h", train_args.d_h, "branch hidden width");
    train_cmd->add_option("--steps", train_args.steps, "training steps");
    train_cmd->add_option("--batch", train_args.batch, "batch size");
    train_cmd->add_option("--lr", train_args.lr, "learning rate");
    train_cmd->add_option("--momentum", train_args.momentum, "SGD momentum");
    train_cmd->add_option("--seed", train_args.seed, "run seed");
    train_cmd->add_option("--gc-log-every", train_args.gc_log_every, "metric record cadence");
    train_cmd->add_flag("--log-gc", train_args.log_gc, "include GC in periodic records");
    train_cmd->add_option("--gc-subsample", train_args.gc_subsample, "GC subsample cap");
    train_cmd->add_option("--out", train_args.out_dir, "output directory");
    train_args.data.attach(train_cmd);

    ModelSource gc_source;
    DataFlags gc_data;
    std::size_t gc_subsample = 512;
    std::string gc_out = default_out_dir();
    CLI::App* gc_cmd = app.add_subcommand("gc", "geometric complexity report");
    gc_source.attach(gc_cmd);
    gc_data.attach(gc_cmd);
    gc_cmd->add_option("--gc-subsample", gc_subsample, "GC subsample cap");
    gc_cmd->add_option("--out", gc_out, "output directory");

    ModelSource embed_source;
    DataFlags embed_data;
    std::string embed_extras = "1,32";
    std::string embed_out = default_out_dir();
    CLI::App* embed_cmd = app.add_subcommand("embed", "zero-padding loss embedding check");
    embed_source.attach(embed_cmd);
    embed_data.attach(embed_cmd);
    embed_cmd->add_option("--extra", embed_extras, "comma-separated padding depths");
    embed_cmd->add_option("--out", embed_out, "output directory");

    std::size_t paths_n = 10;
    CLI::App* paths_cmd = app.add_subcommand("paths", "print the path-count table");
    paths_cmd->add_option("--n", paths_n, "depth");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (verify->parsed()) return cmd_verify_expansion(verify_args);
        if (sweep->parsed()) return cmd_sweep(sweep_args);
        if (train_cmd->parsed()) return cmd_train(train_args);
        if (gc_cmd->parsed()) return cmd_gc(gc_source, gc_data, gc_subsample, gc_out);
        if (embed_cmd->parsed()) return cmd_embed(embed_source, embed_data, embed_extras, embed_out);
        if (paths_cmd->parsed()) return cmd_paths(paths_n);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}
