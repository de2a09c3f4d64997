// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "slotspe/graph.hpp"
#include "support/support.hpp"

using namespace slotspe;
using slotspe::testing::op_cases;

TEST_CASE("softmax of equal logits is uniform") {
    Graph g;
    Var y = g.row_softmax(g.input("x", Tensor{{0.0, 0.0}}));
    CHECK(g.value(y)(0, 0) == doctest::Approx(0.5));
    CHECK(g.value(y)(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("sigmoid midpoint") {
    Graph g;
    CHECK(g.value(g.sigmoid(g.input("x", Tensor::scalar(0.0)))).item() == doctest::Approx(0.5));
}

TEST_CASE("layer norm of [1,2,3]") {
    PrecisionScope ps(Precision::f64);
    Graph g;
    const Tensor y = g.value(g.layer_norm(g.input("x", Tensor{{1.0, 2.0, 3.0}})));
    double mean = (y[0] + y[1] + y[2]) / 3.0;
    double var = 0.0;
    for (std::size_t j = 0; j < 3; ++j) var += (y[j] - mean) * (y[j] - mean) / 3.0;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-4);
}

TEST_CASE("x*x gradient at 3") {
    Graph g;
    Var x = g.input("x", Tensor::scalar(3.0));
    CHECK(g.backward(g.mul(x, x)).at("x").item() == doctest::Approx(6.0));
}

TEST_CASE("stop-gradient factor contributes nothing") {
    Graph g;
    Var x = g.input("x", Tensor::scalar(3.0));
    CHECK(g.backward(g.mul(g.stop_gradient(x), x)).at("x").item() == doctest::Approx(3.0));
    Var only = g.sum(g.stop_gradient(x));
    CHECK(g.backward(only).at("x").item() == 0.0);
}

TEST_CASE("unreachable inputs get zero gradient") {
    Graph g;
    Var x = g.input("x", Tensor::scalar(2.0));
    g.input("unused", Tensor(2, 3, 1.0));
    Gradients grads = g.backward(g.mul(x, x));
    REQUIRE(grads.count("unused") == 1);
    CHECK(grads.at("unused") == Tensor(2, 3, 0.0));
}

TEST_CASE("backward rejects a non-scalar seed") {
    Graph g;
    Var x = g.input("x", Tensor(2, 2, 1.0));
    CHECK_THROWS_AS(g.backward(x), GraphError);
}

TEST_CASE("shape mismatch names the node") {
    Graph g;
    Var a = g.input("a", Tensor(2, 3, 1.0));
    Var b = g.input("b", Tensor(2, 2, 1.0));
    try {
        g.matmul(a, b);
        FAIL("expected GraphError");
    } catch (const GraphError& e) {
        CHECK(e.node() == 2);
        CHECK(e.op() == OpKind::matmul);
    }
}

TEST_CASE("non-finite output is rejected") {
    Graph g;
    Var x = g.input("x", Tensor::scalar(0.0));
    CHECK_THROWS_AS(g.log(x), GraphError);
}

TEST_CASE("replay with new bindings is deterministic") {
    Graph g;
    Var x = g.input("x", Tensor{{1.0, 2.0}});
    Var y = g.sum(g.mul(x, x));
    g.mark_output("y", y);
    auto out1 = forward(g, {{"x", Tensor{{3.0, 4.0}}}});
    auto out2 = forward(g, {{"x", Tensor{{3.0, 4.0}}}});
    CHECK(out1.at("y").item() == doctest::Approx(25.0));
    CHECK(out1 == out2);
}

TEST_CASE("finite differences of a linear function are exact") {
    PrecisionScope ps(Precision::f64);
    Graph g;
    Tensor x0{{0.25, -1.5, 2.0}, {0.5, 0.75, -0.125}};
    Var y = g.sum(g.input("x", x0));
    // dyadic point and step keep every sum exact
    CHECK(finite_diff_check(g, y, {{"x", x0}}, std::ldexp(1.0, -17)).max_rel_error == 0.0);
    CHECK(finite_diff_check(g, y, {{"x", x0}}, 1e-5).max_rel_error < 1e-10);
}

TEST_CASE("squared error through a matmul matches finite differences") {
    PrecisionScope ps(Precision::f64);
    Rng rng(3);
    Graph g;
    Bindings point{{"W", slotspe::testing::random_tensor(rng, 3, 4)},
                   {"x", slotspe::testing::random_tensor(rng, 4, 1)}};
    Var f = g.squared_error(g.matmul(g.input("W", point["W"]), g.input("x", point["x"])),
                            g.constant(slotspe::testing::random_tensor(rng, 3, 1)));
    CHECK(finite_diff_check(g, f, point, 1e-5).max_rel_error < 1e-6);
}

TEST_CASE("log of a row softmax matches finite differences") {
    PrecisionScope ps(Precision::f64);
    Rng rng(11);
    Graph g;
    Bindings point{{"x", slotspe::testing::random_tensor(rng, 3, 5)}};
    Var f = g.sum(g.mul(g.log(g.row_softmax(g.input("x", point["x"]))),
                        g.constant(slotspe::testing::random_tensor(rng, 3, 5))));
    CHECK(finite_diff_check(g, f, point, 1e-5).max_rel_error < 1e-6);
}

TEST_CASE("every op: 64-bit gradients within 1e-6 at 20 points") {
    PrecisionScope ps(Precision::f64);
    for (const auto& op : op_cases()) {
        CAPTURE(op.name);
        for (std::uint64_t s : slotspe::testing::generic_seeds(op, 1000, 20)) {
            const auto r = slotspe::testing::op_fd_report(op, s, 1e-5);
            CAPTURE(s);
            CHECK(r.max_rel_error < 1e-6);
        }
    }
}

TEST_CASE("every op: 32-bit gradients within 1e-4 at 20 points") {
    for (const auto& op : op_cases()) {
        CAPTURE(op.name);
        for (std::uint64_t s = 0; s < 20; ++s) {
            CAPTURE(s);
            CHECK(slotspe::testing::op_f32_error(op, 2000 + s) < 1e-4);
        }
    }
}

TEST_CASE("softmax rows and columns are stochastic") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        Graph g;
        Var x = g.input("x", slotspe::testing::random_tensor(rng, 4, 6, -8.0, 8.0));
        const Tensor r = g.value(g.row_softmax(x));
        const Tensor c = g.value(g.column_softmax(x));
        for (std::size_t i = 0; i < 4; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < 6; ++j) {
                s += r(i, j);
                CHECK(r(i, j) > 0.0);
                CHECK(r(i, j) < 1.0);
            }
            CHECK(std::abs(s - 1.0) < 1e-6);
        }
        for (std::size_t j = 0; j < 6; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < 4; ++i) s += c(i, j);
            CHECK(std::abs(s - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("32-bit mode stores float-representable values") {
    PrecisionScope ps(Precision::f32);
    Graph g;
    Var y = g.scale(g.input("x", Tensor{{0.1, 1.0 / 3.0}}), 1.0 / 7.0);
    for (double v : g.value(y).values()) CHECK(v == static_cast<double>(static_cast<float>(v)));
}

TEST_CASE("graph parents precede their node") {
    Graph g;
    Var a = g.input("a", Tensor(2, 2, 1.0));
    Var b = g.relu(g.matmul(a, a));
    g.sum(b);
    for (std::size_t id = 0; id < g.size(); ++id)
        for (std::size_t p : g.parents(Var{id})) CHECK(p < id);
}
