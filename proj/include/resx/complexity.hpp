#pragma once

#include <span>

#include <json.hpp>

#include "resx/model.hpp"

namespace resx {

// Geometric complexity of the network against its first-order-in-lambda
// approximation. cross_term is the coefficient of 2*lambda, so
// gc_first_order = gc_base + 2 * lambda * cross_term and the remainder is
// O(lambda^2) on smooth branches.
struct GcReport {
    double gc_exact = 0.0;
    double gc_base = 0.0;
    double cross_term = 0.0;
    double gc_first_order = 0.0;
    double remainder = 0.0;
};

// Tr(A^T B) = elementwise inner product of equal-shape matrices.
double trace_inner(const Tensor& a, const Tensor& b);

// Mean squared Frobenius norm of the input-output Jacobian over the given
// inputs, Jacobians assembled exactly by forward-mode autodiff.
// Accumulation follows the sample order. Throws OverflowError carrying the
// failing sample index.
double geometric_complexity(const ResidualNetParams& params, const ModelConfig& config,
                            std::span<const Tensor> inputs);

GcReport gc_first_order(const ResidualNetParams& params, const ModelConfig& config,
                        std::span<const Tensor> inputs);

nlohmann::ordered_json gc_to_json(const GcReport& report);

}  // namespace resx
