#include "resx/expansion.hpp"

#include <stdexcept>
#include <string>

namespace resx {

namespace {

Tensor encode(const ResidualNetParams& params, const Tensor& x) {
    Tensor e = matmul(params.enc_w(), x);
    for (std::size_t i = 0; i < e.size(); ++i) e(i) += params.enc_b()(i);
    return e;
}

Tensor decode_linear(const ResidualNetParams& params, const Tensor& v) {
    return matmul(params.dec_w(), v);  // W_eta only; bias belongs to order 0
}

}  // namespace

Tensor order0(const ResidualNetParams& params, const ModelConfig& config, const Tensor& x) {
    params.check_shapes(config);
    Tensor out = matmul(params.dec_w(), encode(params, x));
    for (std::size_t i = 0; i < out.size(); ++i) out(i) += params.dec_b()(i);
    return out;
}

Tensor order1(const ResidualNetParams& params, const ModelConfig& config, const Tensor& x) {
    params.check_shapes(config);
    const Tensor e = encode(params, x);
    Tensor acc = Tensor::zeros(config.d_e);
    for (std::size_t i = 0; i < config.n; ++i) {
        acc = add(acc, branch_eval(params, config, i, e));
    }
    return decode_linear(params, acc);
}

Tensor order2(const ResidualNetParams& params, const ModelConfig& config, const Tensor& x) {
    params.check_shapes(config);
    const Tensor e = encode(params, x);
    const DiffGraph branch_graph = build_branch_graph(config);

    // Branch values first; each ordered pair i < j then needs one JVP of F_j.
    std::vector<Tensor> branch_values;
    branch_values.reserve(config.n);
    for (std::size_t i = 0; i < config.n; ++i) {
        branch_values.push_back(branch_eval(params, config, i, e));
    }

    Tensor acc = Tensor::zeros(config.d_e);
    for (std::size_t j = 1; j < config.n; ++j) {
        for (std::size_t i = 0; i < j; ++i) {
            acc = add(acc, jvp(branch_graph, params.branch_span(j), e, branch_values[i]));
        }
    }
    return decode_linear(params, acc);
}

ExpansionReport expand(const ResidualNetParams& params, const ModelConfig& config,
                       const Tensor& x) {
    ExpansionReport report;
    report.probe_x = x;
    report.lambda = config.lambda;
    report.n = config.n;
    report.m0 = order0(params, config, x);
    report.m1 = order1(params, config, x);
    report.m2 = order2(params, config, x);
    report.truncated0 = report.m0;
    report.truncated1 = add(report.m0, scale(report.m1, config.lambda));
    report.truncated2 = add(report.truncated1, scale(report.m2, config.lambda * config.lambda));

    const Tensor exact = forward(params, config, x);
    report.remainder_norms[0] = norm2(sub(exact, report.truncated0));
    report.remainder_norms[1] = norm2(sub(exact, report.truncated1));
    report.remainder_norms[2] = norm2(sub(exact, report.truncated2));
    return report;
}

std::map<PathSubset, Tensor> enumerate_paths_linear(const ResidualNetParams& params,
                                                    const ModelConfig& config, const Tensor& z) {
    params.check_shapes(config);
    if (config.branch_kind != BranchKind::linear) {
        throw std::invalid_argument("enumerate_paths_linear requires linear branches");
    }
    if (config.n > 20) {
        throw std::invalid_argument("enumerate_paths_linear capped at n = 20 (2^n subsets), got n = " +
                                    std::to_string(config.n));
    }
    std::map<PathSubset, Tensor> terms;
    const std::uint64_t subset_count = 1ull << config.n;
    for (std::uint64_t mask = 0; mask < subset_count; ++mask) {
        PathSubset subset;
        Tensor v = z;
        double weight = 1.0;
        for (std::size_t b = 0; b < config.n; ++b) {
            if (mask & (1ull << b)) {
                subset.push_back(static_cast<std::uint32_t>(b + 1));
                v = matmul(params.branch_tensor(b, 0), v);
                weight *= config.lambda;
            }
        }
        terms.emplace(std::move(subset), scale(v, weight));
    }
    return terms;
}

std::uint64_t path_count(unsigned n, unsigned k) {
    if (n > 62) throw std::invalid_argument("path_count: n > 62 overflows 64-bit counts");
    if (k > n) throw std::invalid_argument("path_count: k > n");
    if (k > n - k) k = n - k;
    // Multiplicative form with a 128-bit intermediate; every partial
    // product C(n, i) * (n - k + i + 1) is exactly divisible by (i + 1).
    unsigned __int128 result = 1;
    for (unsigned i = 0; i < k; ++i) {
        result = result * (n - k + i + 1) / (i + 1);
    }
    return static_cast<std::uint64_t>(result);
}

std::uint64_t total_paths(unsigned n) {
    if (n > 62) throw std::invalid_argument("total_paths: n > 62 overflows 64-bit counts");
    return 1ull << n;
}

nlohmann::ordered_json expansion_to_json(const ExpansionReport& report) {
    return nlohmann::ordered_json{
        {"lambda", report.lambda},
        {"n", report.n},
        {"remainders",
         {report.remainder_norms[0], report.remainder_norms[1], report.remainder_norms[2]}},
        {"m_norms", {norm2(report.m0), norm2(report.m1), norm2(report.m2)}},
    };
}

}  // namespace resx
