#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "resx/tensor.hpp"

namespace resx {

enum class ActKind { relu, tanh, identity };

// relu'(0) := 0 by convention; finite-difference oracles must mirror this.
double act_eval(ActKind kind, double x);
double act_deriv(ActKind kind, double x);

const char* act_name(ActKind kind);
ActKind act_from_name(const std::string& name);

// Static feed-forward computation graph over a small set of primitives.
// Nodes are evaluated in order; each node reads already-evaluated parents,
// so the graph is acyclic by construction. Inputs may be rank-1 vectors or
// rank-2 matrices whose columns are independent samples (affine biases
// broadcast over columns).
struct Node {
    enum class Kind { input, affine, activation, add, scale };

    Kind kind = Kind::input;
    int parent = -1;    // primary parent node
    int parent2 = -1;   // second operand of add
    int weight = -1;    // param slot of the affine matrix
    int bias = -1;      // param slot of the affine bias, -1 for none
    ActKind act = ActKind::identity;
    double factor = 1.0;  // multiplier for scale nodes
};

class DiffGraph {
public:
    explicit DiffGraph(std::size_t input_dim);

    int add_affine(int parent, int weight_slot, int bias_slot);
    int add_activation(int parent, ActKind kind);
    int add_sum(int a, int b);
    int add_scale(int parent, double factor);

    std::size_t input_dim() const noexcept { return input_dim_; }
    std::size_t node_count() const noexcept { return nodes_.size(); }
    int output_node() const noexcept { return static_cast<int>(nodes_.size()) - 1; }
    const std::vector<Node>& nodes() const noexcept { return nodes_; }

private:
    int push(Node node);

    std::size_t input_dim_;
    std::vector<Node> nodes_;
};

// Per-node values from a forward pass, reused by jvp and vjp.
struct ForwardCache {
    std::vector<Tensor> values;
};

// Evaluates the graph. Throws ShapeError on inconsistent operands and
// OverflowError (carrying the node index) on the first non-finite value.
Tensor forward(const DiffGraph& graph, std::span<const Tensor> params, const Tensor& input,
               ForwardCache* cache = nullptr);

struct VjpResult {
    Tensor input_grad;
    std::vector<Tensor> param_grads;  // aligned with the params span
};

// Reverse mode: exact gradients of <cotangent, output> w.r.t. input and all
// parameters. Rank-2 inputs accumulate over columns.
VjpResult vjp(const DiffGraph& graph, std::span<const Tensor> params, const Tensor& input,
              const Tensor& cotangent);

// Forward mode: directional derivative of the output along `tangent`
// (parameters held fixed).
Tensor jvp(const DiffGraph& graph, std::span<const Tensor> params, const Tensor& input,
           const Tensor& tangent);

// Full d_out x d_in Jacobian at `input`, assembled from input_dim() JVP
// calls on basis tangents. Rank-1 inputs only.
Tensor jacobian(const DiffGraph& graph, std::span<const Tensor> params, const Tensor& input);

}  // namespace resx
