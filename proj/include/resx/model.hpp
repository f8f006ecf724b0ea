#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "resx/graph.hpp"
#include "resx/tensor.hpp"

namespace resx {

enum class BranchKind { linear, mlp };

const char* branch_name(BranchKind kind);
BranchKind branch_from_name(const std::string& name);

// Architecture of the scaled residual network: an affine encoder
// d_in -> d_e, n residual blocks z -> z + lambda * F_i(z) on width d_e, and
// an affine decoder d_e -> d_out. Branches are either a single d_e x d_e
// matrix (linear, no bias) or Linear(d_e -> d_h) -> activation ->
// Linear(d_h -> d_e, with bias). lambda is a hyperparameter, not learned.
struct ModelConfig {
    std::size_t d_in = 2;
    std::size_t d_e = 16;
    std::size_t d_h = 16;
    std::size_t d_out = 2;
    std::size_t n = 0;
    double lambda = 0.0;
    BranchKind branch_kind = BranchKind::mlp;
    ActKind activation = ActKind::relu;  // branch-internal activation, mlp only

    void validate() const;
    std::size_t tensors_per_branch() const noexcept {
        return branch_kind == BranchKind::linear ? 1 : 3;
    }
};

// All learnable parameters, stored as one flat tensor list in checkpoint
// order: encoder W, encoder b, decoder W, decoder b, then the branches in
// block order (linear: A_i; mlp: W1_i, W2_i, b2_i).
class ResidualNetParams {
public:
    // Empty placeholder; any model op rejects it via check_shapes.
    ResidualNetParams() = default;

    // He-style init: weights ~ N(0, 2/fan_in), biases zero.
    static ResidualNetParams init(const ModelConfig& config, Rng& rng);
    static ResidualNetParams zeros(const ModelConfig& config);

    const Tensor& enc_w() const { return tensors_[0]; }
    const Tensor& enc_b() const { return tensors_[1]; }
    const Tensor& dec_w() const { return tensors_[2]; }
    const Tensor& dec_b() const { return tensors_[3]; }
    Tensor& enc_w() { return tensors_[0]; }
    Tensor& enc_b() { return tensors_[1]; }
    Tensor& dec_w() { return tensors_[2]; }
    Tensor& dec_b() { return tensors_[3]; }

    std::size_t branch_count() const noexcept { return n_; }
    // j-th tensor of branch i (0-based block index).
    const Tensor& branch_tensor(std::size_t i, std::size_t j) const;
    Tensor& branch_tensor(std::size_t i, std::size_t j);
    // Contiguous tensors of branch i, usable as the param span of a branch graph.
    std::span<const Tensor> branch_span(std::size_t i) const;

    std::span<const Tensor> tensors() const noexcept { return tensors_; }
    std::span<Tensor> tensors() noexcept { return tensors_; }

    void check_shapes(const ModelConfig& config) const;

private:
    ResidualNetParams(std::vector<Tensor> tensors, std::size_t n, std::size_t per_branch);
    std::size_t branch_offset(std::size_t i, std::size_t j) const;

    std::vector<Tensor> tensors_;
    std::size_t n_ = 0;
    std::size_t per_branch_ = 0;

    friend std::pair<ResidualNetParams, ModelConfig> zero_pad_depth(
        const ResidualNetParams&, const ModelConfig&, std::size_t);
};

// F_i(z) for a rank-1 or rank-2 (column-batched) z.
Tensor branch_eval(const ResidualNetParams& params, const ModelConfig& config, std::size_t i,
                   const Tensor& z);

// Full network pass D(R(E(x))). Throws OverflowError with a 1-based block
// index when a block output goes non-finite (0 = encoder, n+1 = decoder).
Tensor forward(const ResidualNetParams& params, const ModelConfig& config, const Tensor& x);

struct TowerResult {
    Tensor output;
    std::vector<double> block_norms;  // ||z_k||_2 after each block, rank-1 probes only
};

// The residual tower alone, with per-block norm diagnostics.
TowerResult residual_tower(const ResidualNetParams& params, const ModelConfig& config,
                           const Tensor& z);

// Appends `extra` branches with all-zero parameters. The padded network is
// functionally identical: z + lambda * 0 = z holds bitwise.
std::pair<ResidualNetParams, ModelConfig> zero_pad_depth(const ResidualNetParams& params,
                                                         const ModelConfig& config,
                                                         std::size_t extra);

// Differentiable graph of the whole network; param slots match
// ResidualNetParams::tensors() order.
DiffGraph build_network_graph(const ModelConfig& config);
// Graph of one branch F_i; param slots match branch_span(i) order.
DiffGraph build_branch_graph(const ModelConfig& config);

// Flat binary checkpoint: magic "RESX1", config fields as little-endian
// 64-bit values in declared order, then tensors in declaration order as raw
// little-endian doubles. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const ResidualNetParams& params,
                     const ModelConfig& config);
std::pair<ResidualNetParams, ModelConfig> load_checkpoint(const std::string& path);

}  // namespace resx
