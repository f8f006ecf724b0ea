#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <vector>

#include <json.hpp>

#include "resx/model.hpp"

namespace resx {

// Ordered ensemble terms of the residual expansion at a probe point. m0,
// m1, m2 are the unscaled order-k sums; the truncated fields fold in the
// lambda powers; remainder_norms[k] = ||f(x) - truncated_k(x)||_2.
struct ExpansionReport {
    Tensor probe_x;
    Tensor m0, m1, m2;
    Tensor truncated0, truncated1, truncated2;
    std::array<double, 3> remainder_norms{};
    double lambda = 0.0;
    std::size_t n = 0;
};

// Affine base model W_eta(W_xi x + b_xi) + b_eta; equals the lambda = 0 network.
Tensor order0(const ResidualNetParams& params, const ModelConfig& config, const Tensor& x);

// Unscaled first-order sum: sum_i W_eta F_i(E(x)). Caller applies lambda.
Tensor order1(const ResidualNetParams& params, const ModelConfig& config, const Tensor& x);

// Unscaled second-order sum over ordered pairs i < j:
// sum W_eta F_j'(E(x)) F_i(E(x)), each term one JVP of F_j in direction F_i(E(x)).
Tensor order2(const ResidualNetParams& params, const ModelConfig& config, const Tensor& x);

ExpansionReport expand(const ResidualNetParams& params, const ModelConfig& config,
                       const Tensor& x);

// Strictly increasing 1-based block indices identifying one path through
// the tower (empty = the identity path).
using PathSubset = std::vector<std::uint32_t>;

// Exact unraveled view for linear branches: term(S) = lambda^|S| *
// A_{s_k} ... A_{s_1} z, applied in ascending index order. The sum of all
// 2^n terms reproduces residual_tower(z) up to rounding. Guarded to n <= 20.
std::map<PathSubset, Tensor> enumerate_paths_linear(const ResidualNetParams& params,
                                                    const ModelConfig& config, const Tensor& z);

// C(n, k) and 2^n in exact 64-bit arithmetic; n <= 62.
std::uint64_t path_count(unsigned n, unsigned k);
std::uint64_t total_paths(unsigned n);

nlohmann::ordered_json expansion_to_json(const ExpansionReport& report);

}  // namespace resx
