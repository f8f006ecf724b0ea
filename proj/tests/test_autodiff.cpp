#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "resx/graph.hpp"
#include "resx/tensor.hpp"

using namespace resx;

namespace {

struct TwoLayerTanh {
    // f(x) = W2 tanh(W1 x + b1) + b2
    DiffGraph graph = DiffGraph(0);
    std::vector<Tensor> params;

    explicit TwoLayerTanh(Rng& rng, std::size_t d_in = 3, std::size_t d_h = 5,
                          std::size_t d_out = 2)
        : graph(d_in) {
        params.push_back(gaussian(rng, d_h, d_in, 0.7));
        params.push_back(gaussian(rng, d_h, 0.5));
        params.push_back(gaussian(rng, d_out, d_h, 0.7));
        params.push_back(gaussian(rng, d_out, 0.5));
        int h = graph.add_affine(0, 0, 1);
        h = graph.add_activation(h, ActKind::tanh);
        graph.add_affine(h, 2, 3);
    }

    // Closed-form evaluation, independent of the graph machinery.
    Tensor eval(const Tensor& x) const {
        Tensor h = Tensor::zeros(params[0].rows());
        for (std::size_t i = 0; i < h.size(); ++i) {
            double acc = params[1](i);
            for (std::size_t j = 0; j < x.size(); ++j) acc += params[0](i, j) * x(j);
            h(i) = std::tanh(acc);
        }
        Tensor out = Tensor::zeros(params[2].rows());
        for (std::size_t i = 0; i < out.size(); ++i) {
            double acc = params[3](i);
            for (std::size_t j = 0; j < h.size(); ++j) acc += params[2](i, j) * h(j);
            out(i) = acc;
        }
        return out;
    }
};

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.same_shape(b));
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    }
    return m;
}

}  // namespace

TEST_CASE("forward on the identity graph returns the input") {
    DiffGraph g(4);
    Tensor x = Tensor::vector({1.0, -2.0, 3.0, 0.5});
    CHECK(forward(g, {}, x) == x);
}

TEST_CASE("forward single affine node with zero weight returns the bias") {
    DiffGraph g(3);
    g.add_affine(0, 0, 1);
    std::vector<Tensor> params{Tensor::zeros(2, 3), Tensor::vector({5.0, -7.0})};
    Tensor out = forward(g, params, Tensor::vector({1.0, 2.0, 3.0}));
    CHECK(out == params[1]);
}

TEST_CASE("forward matches a closed-form two-layer tanh MLP") {
    Rng rng(21);
    TwoLayerTanh mlp(rng);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor x = gaussian(rng, 3, 1.0);
        CHECK(max_abs_diff(forward(mlp.graph, mlp.params, x), mlp.eval(x)) < 1e-12);
    }
}

TEST_CASE("forward rejects bad input width and reports overflow node") {
    DiffGraph g(3);
    g.add_scale(0, 1e308);
    g.add_scale(1, 1e308);
    CHECK_THROWS_AS(forward(g, {}, Tensor::vector({1.0, 2.0})), ShapeError);
    try {
        // First scale keeps values finite; the second one overflows.
        forward(g, {}, Tensor::vector({1.0, 0.5, 0.25}));
        FAIL("expected OverflowError");
    } catch (const OverflowError& e) {
        CHECK(e.index() == 2);
    }
}

TEST_CASE("vjp of a linear graph is the transpose action") {
    Rng rng(5);
    DiffGraph g(4);
    g.add_affine(0, 0, -1);
    std::vector<Tensor> params{gaussian(rng, 3, 4, 1.0)};
    Tensor x = gaussian(rng, 4, 1.0);
    Tensor u = gaussian(rng, 3, 1.0);
    VjpResult result = vjp(g, params, x, u);
    CHECK(max_abs_diff(result.input_grad, matmul(transpose(params[0]), u)) < 1e-14);
}

TEST_CASE("vjp gradient of 0.5||f(x)||^2 matches central finite differences") {
    Rng rng(31);
    TwoLayerTanh mlp(rng);
    Tensor x = gaussian(rng, 3, 1.0);

    Tensor fx = forward(mlp.graph, mlp.params, x);
    VjpResult grads = vjp(mlp.graph, mlp.params, x, fx);  // cotangent f(x) => grad of 0.5||f||^2

    const double h = 1e-5;
    auto scalar_loss = [&](const std::vector<Tensor>& params) {
        TwoLayerTanh probe = mlp;
        probe.params = params;
        Tensor out = forward(probe.graph, probe.params, x);
        return 0.5 * frobenius_norm_sq(out);
    };

    for (std::size_t t = 0; t < mlp.params.size(); ++t) {
        for (std::size_t i = 0; i < mlp.params[t].size(); ++i) {
            std::vector<Tensor> plus = mlp.params;
            std::vector<Tensor> minus = mlp.params;
            plus[t].data()[i] += h;
            minus[t].data()[i] -= h;
            const double fd = (scalar_loss(plus) - scalar_loss(minus)) / (2 * h);
            const double exact = grads.param_grads[t].data()[i];
            const double scale_ref = std::max(1.0, std::abs(fd));
            CHECK(std::abs(fd - exact) / scale_ref < 1e-6);
        }
    }
}

TEST_CASE("vjp through an all-zero relu MLP only reaches the final bias") {
    DiffGraph g(3);
    int h = g.add_affine(0, 0, -1);
    h = g.add_activation(h, ActKind::relu);
    g.add_affine(h, 1, 2);
    std::vector<Tensor> params{Tensor::zeros(4, 3), Tensor::zeros(2, 4), Tensor::zeros(2)};

    Tensor u = Tensor::vector({1.0, 1.0});
    VjpResult result = vjp(g, params, Tensor::vector({1.0, -1.0, 2.0}), u);
    CHECK(frobenius_norm_sq(result.param_grads[0]) == 0.0);  // relu'(0) = 0 kills W1
    CHECK(frobenius_norm_sq(result.param_grads[1]) == 0.0);  // hidden value is zero
    CHECK(result.param_grads[2] == u);                       // bias path stays open
    CHECK(frobenius_norm_sq(result.input_grad) == 0.0);
}

TEST_CASE("jvp of a linear graph applies the matrix to the tangent") {
    Rng rng(9);
    DiffGraph g(4);
    g.add_affine(0, 0, -1);
    std::vector<Tensor> params{gaussian(rng, 4, 4, 1.0)};
    Tensor z = gaussian(rng, 4, 1.0);
    Tensor v = gaussian(rng, 4, 1.0);
    CHECK(max_abs_diff(jvp(g, params, z, v), matmul(params[0], v)) < 1e-14);
    CHECK(frobenius_norm_sq(jvp(g, params, z, Tensor::zeros(4))) == 0.0);
}

TEST_CASE("jvp matches central finite differences on a tanh branch") {
    Rng rng(41);
    TwoLayerTanh mlp(rng);
    Tensor z = gaussian(rng, 3, 1.0);
    Tensor v = gaussian(rng, 3, 1.0);

    Tensor exact = jvp(mlp.graph, mlp.params, z, v);
    const double h = 1e-5;
    Tensor fd = scale(sub(forward(mlp.graph, mlp.params, add(z, scale(v, h))),
                          forward(mlp.graph, mlp.params, sub(z, scale(v, h)))),
                      1.0 / (2 * h));
    for (std::size_t i = 0; i < exact.size(); ++i) {
        CHECK(std::abs(exact(i) - fd(i)) / std::max(1.0, std::abs(fd(i))) < 1e-6);
    }
}

TEST_CASE("jvp is linear in the tangent") {
    Rng rng(51);
    TwoLayerTanh mlp(rng);
    Tensor z = gaussian(rng, 3, 1.0);
    Tensor v = gaussian(rng, 3, 1.0);
    Tensor w = gaussian(rng, 3, 1.0);
    const double a = 1.7, b = -0.4;
    Tensor lhs = jvp(mlp.graph, mlp.params, z, add(scale(v, a), scale(w, b)));
    Tensor rhs = add(scale(jvp(mlp.graph, mlp.params, z, v), a),
                     scale(jvp(mlp.graph, mlp.params, z, w), b));
    CHECK(max_abs_diff(lhs, rhs) < 1e-12);
}

TEST_CASE("forward/reverse transpose identity") {
    Rng rng(61);
    TwoLayerTanh mlp(rng);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor z = gaussian(rng, 3, 1.0);
        Tensor v = gaussian(rng, 3, 1.0);
        Tensor u = gaussian(rng, 2, 1.0);
        const double lhs = dot(u, jvp(mlp.graph, mlp.params, z, v));
        const double rhs = dot(vjp(mlp.graph, mlp.params, z, u).input_grad, v);
        CHECK(std::abs(lhs - rhs) < 1e-10);
    }
}

TEST_CASE("jacobian of an affine map is the weight matrix") {
    Rng rng(71);
    DiffGraph g(4);
    g.add_affine(0, 0, 1);
    std::vector<Tensor> params{gaussian(rng, 3, 4, 1.0), gaussian(rng, 3, 1.0)};
    Tensor jac = jacobian(g, params, gaussian(rng, 4, 1.0));
    CHECK(max_abs_diff(jac, params[0]) == 0.0);
}

TEST_CASE("jacobian times vector equals jvp") {
    Rng rng(81);
    TwoLayerTanh mlp(rng);
    Tensor z = gaussian(rng, 3, 1.0);
    Tensor jac = jacobian(mlp.graph, mlp.params, z);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor v = gaussian(rng, 3, 1.0);
        CHECK(max_abs_diff(matmul(jac, v), jvp(mlp.graph, mlp.params, z, v)) < 1e-12);
    }
}

TEST_CASE("jacobian matches column-by-column finite differences") {
    Rng rng(91);
    TwoLayerTanh mlp(rng);
    Tensor z = gaussian(rng, 3, 1.0);
    Tensor jac = jacobian(mlp.graph, mlp.params, z);
    const double h = 1e-5;
    for (std::size_t c = 0; c < 3; ++c) {
        Tensor e = Tensor::basis(3, c);
        Tensor fd = scale(sub(forward(mlp.graph, mlp.params, add(z, scale(e, h))),
                              forward(mlp.graph, mlp.params, sub(z, scale(e, h)))),
                          1.0 / (2 * h));
        for (std::size_t r = 0; r < jac.rows(); ++r) {
            CHECK(std::abs(jac(r, c) - fd(r)) / std::max(1.0, std::abs(fd(r))) < 1e-6);
        }
    }
}

TEST_CASE("relu derivative agrees with finite differences away from kinks") {
    Rng rng(101);
    DiffGraph g(3);
    int h = g.add_affine(0, 0, -1);
    h = g.add_activation(h, ActKind::relu);
    g.add_affine(h, 1, -1);

    std::vector<Tensor> params{gaussian(rng, 5, 3, 1.0), gaussian(rng, 2, 5, 1.0)};
    const double fd_h = 1e-5;
    int tested = 0;
    while (tested < 5) {
        Tensor z = gaussian(rng, 3, 1.0);
        // Resample probes whose pre-activations sit within 1e-3 of a kink.
        Tensor pre = matmul(params[0], z);
        bool near_kink = false;
        for (double p : pre.data()) near_kink = near_kink || std::abs(p) < 1e-3;
        if (near_kink) continue;
        ++tested;

        Tensor v = gaussian(rng, 3, 0.01);
        Tensor exact = jvp(g, params, z, v);
        Tensor fd = scale(sub(forward(g, params, add(z, scale(v, fd_h))),
                              forward(g, params, sub(z, scale(v, fd_h)))),
                          1.0 / (2 * fd_h));
        for (std::size_t i = 0; i < exact.size(); ++i) {
            CHECK(std::abs(exact(i) - fd(i)) / std::max(1.0, std::abs(fd(i))) < 1e-6);
        }
    }
}

TEST_CASE("batched rank-2 inputs agree with per-column evaluation") {
    Rng rng(111);
    TwoLayerTanh mlp(rng);
    Tensor batch = gaussian(rng, 3, 6, 1.0);
    Tensor batched_out = forward(mlp.graph, mlp.params, batch);
    REQUIRE(batched_out.rank() == 2);
    for (std::size_t c = 0; c < 6; ++c) {
        Tensor single = forward(mlp.graph, mlp.params, batch.col(c));
        for (std::size_t r = 0; r < single.size(); ++r) {
            CHECK(batched_out(r, c) == single(r));
        }
    }

    // Batched vjp accumulates per-column weight gradients.
    Tensor cotangent = gaussian(rng, 2, 6, 1.0);
    VjpResult batched = vjp(mlp.graph, mlp.params, batch, cotangent);
    std::vector<Tensor> summed;
    for (const Tensor& p : mlp.params) {
        summed.push_back(p.rank() == 2 ? Tensor::zeros(p.rows(), p.cols())
                                       : Tensor::zeros(p.size()));
    }
    for (std::size_t c = 0; c < 6; ++c) {
        VjpResult single = vjp(mlp.graph, mlp.params, batch.col(c), cotangent.col(c));
        for (std::size_t t = 0; t < summed.size(); ++t) {
            summed[t] = add(summed[t], single.param_grads[t]);
        }
    }
    for (std::size_t t = 0; t < summed.size(); ++t) {
        CHECK(max_abs_diff(batched.param_grads[t], summed[t]) < 1e-12);
    }
}
