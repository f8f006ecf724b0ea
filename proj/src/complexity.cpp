#include "resx/complexity.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace resx {

double trace_inner(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("trace_inner: shapes disagree " + a.shape_str() + " vs " + b.shape_str());
    }
    return dot(a, b);
}

double geometric_complexity(const ResidualNetParams& params, const ModelConfig& config,
                            std::span<const Tensor> inputs) {
    params.check_shapes(config);
    if (inputs.empty()) throw std::invalid_argument("geometric_complexity: empty dataset");
    const DiffGraph net = build_network_graph(config);
    double acc = 0.0;
    for (std::size_t s = 0; s < inputs.size(); ++s) {
        try {
            acc += frobenius_norm_sq(jacobian(net, params.tensors(), inputs[s]));
        } catch (const OverflowError&) {
            throw OverflowError("non-finite Jacobian at sample " + std::to_string(s), s);
        }
    }
    return acc / static_cast<double>(inputs.size());
}

GcReport gc_first_order(const ResidualNetParams& params, const ModelConfig& config,
                        std::span<const Tensor> inputs) {
    params.check_shapes(config);
    if (inputs.empty()) throw std::invalid_argument("gc_first_order: empty dataset");

    GcReport report;
    // The encoder is affine, so E'(x) = W_xi and the base Jacobian
    // A = W_eta W_xi is constant across the dataset.
    const Tensor base_jac = matmul(params.dec_w(), params.enc_w());
    report.gc_base = frobenius_norm_sq(base_jac);

    const DiffGraph branch_graph = build_branch_graph(config);
    double cross_acc = 0.0;
    for (std::size_t s = 0; s < inputs.size(); ++s) {
        const Tensor& x = inputs[s];
        Tensor e = matmul(params.enc_w(), x);
        for (std::size_t i = 0; i < e.size(); ++i) e(i) += params.enc_b()(i);

        // B(x) = sum_i W_eta F_i'(E(x)) W_xi, built one input column at a time.
        Tensor b_mat = Tensor::zeros(config.d_out, config.d_in);
        for (std::size_t c = 0; c < config.d_in; ++c) {
            Tensor tangent = params.enc_w().col(c);
            Tensor col_acc = Tensor::zeros(config.d_e);
            for (std::size_t i = 0; i < config.n; ++i) {
                col_acc = add(col_acc, jvp(branch_graph, params.branch_span(i), e, tangent));
            }
            Tensor decoded = matmul(params.dec_w(), col_acc);
            for (std::size_t r = 0; r < config.d_out; ++r) b_mat(r, c) = decoded(r);
        }
        cross_acc += trace_inner(base_jac, b_mat);
    }
    report.cross_term = cross_acc / static_cast<double>(inputs.size());
    report.gc_first_order = report.gc_base + 2.0 * config.lambda * report.cross_term;
    report.gc_exact = geometric_complexity(params, config, inputs);
    report.remainder = std::abs(report.gc_exact - report.gc_first_order);
    return report;
}

nlohmann::ordered_json gc_to_json(const GcReport& report) {
    return nlohmann::ordered_json{
        {"gc_exact", report.gc_exact},
        {"gc_base", report.gc_base},
        {"cross_term", report.cross_term},
        {"gc_first_order", report.gc_first_order},
        {"remainder", report.remainder},
    };
}

}  // namespace resx
