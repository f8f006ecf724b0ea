#include "resx/graph.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace resx {

double act_eval(ActKind kind, double x) {
    switch (kind) {
        case ActKind::relu: return x > 0.0 ? x : 0.0;
        case ActKind::tanh: return std::tanh(x);
        case ActKind::identity: return x;
    }
    return x;
}

double act_deriv(ActKind kind, double x) {
    switch (kind) {
        case ActKind::relu: return x > 0.0 ? 1.0 : 0.0;
        case ActKind::tanh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case ActKind::identity: return 1.0;
    }
    return 1.0;
}

const char* act_name(ActKind kind) {
    switch (kind) {
        case ActKind::relu: return "relu";
        case ActKind::tanh: return "tanh";
        case ActKind::identity: return "identity";
    }
    return "identity";
}

ActKind act_from_name(const std::string& name) {
    if (name == "relu") return ActKind::relu;
    if (name == "tanh") return ActKind::tanh;
    if (name == "identity") return ActKind::identity;
    throw std::invalid_argument("unknown activation: " + name);
}

DiffGraph::DiffGraph(std::size_t input_dim) : input_dim_(input_dim) {
    Node n;
    n.kind = Node::Kind::input;
    nodes_.push_back(n);
}

int DiffGraph::push(Node node) {
    const int limit = static_cast<int>(nodes_.size());
    if (node.parent < 0 || node.parent >= limit ||
        (node.kind == Node::Kind::add && (node.parent2 < 0 || node.parent2 >= limit))) {
        throw std::invalid_argument("graph node parent out of range");
    }
    nodes_.push_back(node);
    return static_cast<int>(nodes_.size()) - 1;
}

int DiffGraph::add_affine(int parent, int weight_slot, int bias_slot) {
    Node n;
    n.kind = Node::Kind::affine;
    n.parent = parent;
    n.weight = weight_slot;
    n.bias = bias_slot;
    return push(n);
}

int DiffGraph::add_activation(int parent, ActKind kind) {
    Node n;
    n.kind = Node::Kind::activation;
    n.parent = parent;
    n.act = kind;
    return push(n);
}

int DiffGraph::add_sum(int a, int b) {
    Node n;
    n.kind = Node::Kind::add;
    n.parent = a;
    n.parent2 = b;
    return push(n);
}

int DiffGraph::add_scale(int parent, double factor) {
    Node n;
    n.kind = Node::Kind::scale;
    n.parent = parent;
    n.factor = factor;
    return push(n);
}

namespace {

const Tensor& param_at(std::span<const Tensor> params, int slot, const char* what) {
    if (slot < 0 || static_cast<std::size_t>(slot) >= params.size()) {
        throw std::invalid_argument(std::string("graph references missing param slot for ") + what);
    }
    return params[static_cast<std::size_t>(slot)];
}

// y = W x (+ b broadcast over columns for rank-2 x).
Tensor affine_apply(const Tensor& w, const Tensor* b, const Tensor& x) {
    Tensor y = matmul(w, x);
    if (b == nullptr) return y;
    if (y.rank() == 1) {
        if (b->size() != y.size()) throw ShapeError("affine: bias length mismatch");
        for (std::size_t i = 0; i < y.size(); ++i) y(i) += (*b)(i);
    } else {
        if (b->size() != y.rows()) throw ShapeError("affine: bias length mismatch");
        for (std::size_t i = 0; i < y.rows(); ++i) {
            for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += (*b)(i);
        }
    }
    return y;
}

Tensor elementwise_act(ActKind kind, const Tensor& x) {
    Tensor y = x;
    for (double& v : y.data()) v = act_eval(kind, v);
    return y;
}

void check_finite(const Tensor& value, std::size_t node_index) {
    if (!value.all_finite()) {
        throw OverflowError("non-finite value at graph node " + std::to_string(node_index),
                            node_index);
    }
}

std::vector<Tensor> eval_nodes(const DiffGraph& graph, std::span<const Tensor> params,
                               const Tensor& input) {
    const std::size_t expected = graph.input_dim();
    const std::size_t got = input.rank() == 1 ? input.size() : input.rows();
    if (got != expected) {
        throw ShapeError("graph input width " + std::to_string(got) + " != expected " +
                         std::to_string(expected));
    }
    std::vector<Tensor> values;
    values.reserve(graph.node_count());
    for (std::size_t idx = 0; idx < graph.node_count(); ++idx) {
        const Node& node = graph.nodes()[idx];
        switch (node.kind) {
            case Node::Kind::input:
                values.push_back(input);
                break;
            case Node::Kind::affine: {
                const Tensor& w = param_at(params, node.weight, "affine weight");
                const Tensor* b =
                    node.bias >= 0 ? &param_at(params, node.bias, "affine bias") : nullptr;
                values.push_back(affine_apply(w, b, values[node.parent]));
                break;
            }
            case Node::Kind::activation:
                values.push_back(elementwise_act(node.act, values[node.parent]));
                break;
            case Node::Kind::add:
                values.push_back(add(values[node.parent], values[node.parent2]));
                break;
            case Node::Kind::scale:
                values.push_back(scale(values[node.parent], node.factor));
                break;
        }
        check_finite(values.back(), idx);
    }
    return values;
}

}  // namespace

Tensor forward(const DiffGraph& graph, std::span<const Tensor> params, const Tensor& input,
               ForwardCache* cache) {
    std::vector<Tensor> values = eval_nodes(graph, params, input);
    Tensor out = values.back();
    if (cache != nullptr) cache->values = std::move(values);
    return out;
}

VjpResult vjp(const DiffGraph& graph, std::span<const Tensor> params, const Tensor& input,
              const Tensor& cotangent) {
    std::vector<Tensor> values = eval_nodes(graph, params, input);
    if (!cotangent.same_shape(values.back())) {
        throw ShapeError("vjp: cotangent shape " + cotangent.shape_str() +
                         " != output shape " + values.back().shape_str());
    }

    // adjoints[i] accumulates d<u, output>/d(node i value)
    std::vector<Tensor> adjoints(graph.node_count());
    std::vector<bool> live(graph.node_count(), false);
    adjoints.back() = cotangent;
    live.back() = true;

    VjpResult result;
    result.param_grads.reserve(params.size());
    for (const Tensor& p : params) {
        result.param_grads.push_back(p.rank() == 2 ? Tensor::zeros(p.rows(), p.cols())
                                                   : Tensor::zeros(p.size()));
    }

    auto accumulate = [&](int target, const Tensor& delta) {
        if (!live[target]) {
            adjoints[target] = delta;
            live[target] = true;
        } else {
            adjoints[target] = add(adjoints[target], delta);
        }
    };

    for (std::size_t idx = graph.node_count(); idx-- > 0;) {
        if (!live[idx]) continue;
        const Node& node = graph.nodes()[idx];
        const Tensor& u = adjoints[idx];
        switch (node.kind) {
            case Node::Kind::input:
                result.input_grad = u;
                break;
            case Node::Kind::affine: {
                const Tensor& w = param_at(params, node.weight, "affine weight");
                const Tensor& x = values[node.parent];
                accumulate(node.parent, matmul(transpose(w), u));
                Tensor& wg = result.param_grads[node.weight];
                if (x.rank() == 1) {
                    for (std::size_t i = 0; i < u.size(); ++i) {
                        for (std::size_t j = 0; j < x.size(); ++j) wg(i, j) += u(i) * x(j);
                    }
                } else {
                    // dW = u x^T sums over sample columns.
                    for (std::size_t i = 0; i < u.rows(); ++i) {
                        for (std::size_t j = 0; j < x.rows(); ++j) {
                            double acc = 0.0;
                            for (std::size_t c = 0; c < u.cols(); ++c) acc += u(i, c) * x(j, c);
                            wg(i, j) += acc;
                        }
                    }
                }
                if (node.bias >= 0) {
                    Tensor& bg = result.param_grads[node.bias];
                    if (u.rank() == 1) {
                        for (std::size_t i = 0; i < u.size(); ++i) bg(i) += u(i);
                    } else {
                        for (std::size_t i = 0; i < u.rows(); ++i) {
                            for (std::size_t c = 0; c < u.cols(); ++c) bg(i) += u(i, c);
                        }
                    }
                }
                break;
            }
            case Node::Kind::activation: {
                const Tensor& x = values[node.parent];
                Tensor delta = u;
                auto dd = delta.data();
                auto dx = x.data();
                for (std::size_t i = 0; i < dd.size(); ++i) dd[i] *= act_deriv(node.act, dx[i]);
                accumulate(node.parent, delta);
                break;
            }
            case Node::Kind::add:
                accumulate(node.parent, u);
                accumulate(node.parent2, u);
                break;
            case Node::Kind::scale:
                accumulate(node.parent, scale(u, node.factor));
                break;
        }
    }

    if (result.input_grad.size() == 0) {
        result.input_grad = input.rank() == 2 ? Tensor::zeros(input.rows(), input.cols())
                                              : Tensor::zeros(input.size());
    }
    return result;
}

Tensor jvp(const DiffGraph& graph, std::span<const Tensor> params, const Tensor& input,
           const Tensor& tangent) {
    if (!tangent.same_shape(input)) {
        throw ShapeError("jvp: tangent shape " + tangent.shape_str() + " != input shape " +
                         input.shape_str());
    }
    std::vector<Tensor> values = eval_nodes(graph, params, input);
    std::vector<Tensor> tangents(graph.node_count());
    for (std::size_t idx = 0; idx < graph.node_count(); ++idx) {
        const Node& node = graph.nodes()[idx];
        switch (node.kind) {
            case Node::Kind::input:
                tangents[idx] = tangent;
                break;
            case Node::Kind::affine: {
                const Tensor& w = param_at(params, node.weight, "affine weight");
                tangents[idx] = matmul(w, tangents[node.parent]);
                break;
            }
            case Node::Kind::activation: {
                const Tensor& x = values[node.parent];
                Tensor t = tangents[node.parent];
                auto td = t.data();
                auto xd = x.data();
                for (std::size_t i = 0; i < td.size(); ++i) td[i] *= act_deriv(node.act, xd[i]);
                tangents[idx] = std::move(t);
                break;
            }
            case Node::Kind::add:
                tangents[idx] = add(tangents[node.parent], tangents[node.parent2]);
                break;
            case Node::Kind::scale:
                tangents[idx] = scale(tangents[node.parent], node.factor);
                break;
        }
    }
    return tangents.back();
}

Tensor jacobian(const DiffGraph& graph, std::span<const Tensor> params, const Tensor& input) {
    if (input.rank() != 1) throw ShapeError("jacobian: input must be rank 1");
    const std::size_t d_in = graph.input_dim();
    Tensor probe_out = forward(graph, params, input);
    const std::size_t d_out = probe_out.size();
    Tensor jac = Tensor::zeros(d_out, d_in);
    for (std::size_t c = 0; c < d_in; ++c) {
        Tensor column = jvp(graph, params, input, Tensor::basis(d_in, c));
        for (std::size_t r = 0; r < d_out; ++r) jac(r, c) = column(r);
    }
    return jac;
}

}  // namespace resx
