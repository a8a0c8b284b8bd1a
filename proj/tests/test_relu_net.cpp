#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "scorelab/relu_net.hpp"

using namespace scorelab;

namespace {

ReluNet random_shallow(int in_dim, int m, uint64_t seed) {
    auto rng = make_rng(seed);
    MatrixXd w = normal_matrix(rng, m, in_dim);
    VectorXd b = normal_vector(rng, m);
    VectorXd a = normal_vector(rng, m);
    return shallow_net(w, b, a, std_normal(rng));
}

}  // namespace

TEST_CASE("single neuron and identity trick") {
    // 1*(x-0)^+ at x=-1 is 0
    ReluNet neuron = shallow_net(MatrixXd::Ones(1, 1), VectorXd::Zero(1), VectorXd::Ones(1), 0.0);
    CHECK(neuron.eval(VectorXd::Constant(1, -1.0))[0] == 0.0);
    CHECK(neuron.eval(VectorXd::Constant(1, 2.0))[0] == 2.0);

    ReluNet id = identity_net(1);
    CHECK(id.eval(VectorXd::Constant(1, -3.0))[0] == -3.0);
    CHECK(id.eval(VectorXd::Constant(1, 5.5))[0] == 5.5);
}

TEST_CASE("two-layer composition matches hand computation") {
    // inner(x) = 2(x-1)^+ - (x+1)^+,  outer(y) = (y)^+ - 3(-y-2)^+
    MatrixXd wi(2, 1);
    wi << 1, 1;
    VectorXd bi(2);
    bi << -1, 1;
    VectorXd ai(2);
    ai << 2, -1;
    ReluNet inner = shallow_net(wi, bi, ai, 0.0);
    MatrixXd wo(2, 1);
    wo << 1, -1;
    VectorXd bo(2);
    bo << 0, -2;
    VectorXd ao(2);
    ao << 1, -3;
    ReluNet outer = shallow_net(wo, bo, ao, 0.0);
    ReluNet comp = compose(outer, inner);
    CHECK(comp.depth() == 3);
    auto by_hand = [](double x) {
        double y = 2.0 * std::max(x - 1.0, 0.0) - std::max(x + 1.0, 0.0);
        return std::max(y, 0.0) - 3.0 * std::max(-y - 2.0, 0.0);
    };
    for (double x : {-4.0, -1.0, 0.0, 1.5, 3.0}) {
        CHECK(comp.eval(VectorXd::Constant(1, x))[0] ==
              doctest::Approx(by_hand(x)).epsilon(1e-14));
    }
}

TEST_CASE("compose equals pointwise composition on random nets") {
    ReluNet inner = random_shallow(2, 7, 11);
    // make inner output feed a 1-input outer
    ReluNet outer = random_shallow(1, 5, 12);
    ReluNet comp = compose(outer, inner);
    auto rng = make_rng(99);
    for (int i = 0; i < 100; ++i) {
        VectorXd x = normal_vector(rng, 2);
        CHECK(comp.eval(x)[0] == doctest::Approx(outer.eval(inner.eval(x))[0]).epsilon(1e-12));
    }
}

TEST_CASE("path norm: shallow formula, zero net, submultiplicativity, additivity") {
    // single neuron a=2, w=(1,-1), b=3 -> 2*(2+3) = 10
    MatrixXd w(1, 2);
    w << 1, -1;
    ReluNet n = shallow_net(w, VectorXd::Constant(1, 3.0), VectorXd::Constant(1, 2.0), 0.0);
    CHECK(n.path_norm() == doctest::Approx(10.0));

    ReluNet zero = shallow_net(MatrixXd::Zero(3, 2), VectorXd::Zero(3), VectorXd::Zero(3), 0.0);
    CHECK(zero.path_norm() == 0.0);

    for (uint64_t s = 1; s <= 20; ++s) {
        ReluNet a = random_shallow(1, 6, 2 * s);
        ReluNet b = random_shallow(3, 4, 2 * s + 1);
        // b maps R^3 -> R, a maps R -> R
        ReluNet c = compose(a, b);
        CHECK(c.path_norm() <= a.path_norm() * b.path_norm() + 1e-12);
    }

    // exact additivity over parallel sums of shallow nets
    ReluNet p1 = random_shallow(2, 5, 31);
    ReluNet p2 = random_shallow(2, 8, 32);
    ReluNet sum = parallel_sum({p1, p2}, VectorXd::Ones(2), 0.0);
    CHECK(sum.path_norm() == doctest::Approx(p1.path_norm() + p2.path_norm()).epsilon(1e-12));
    auto rng = make_rng(55);
    for (int i = 0; i < 50; ++i) {
        VectorXd x = normal_vector(rng, 2);
        CHECK(sum.eval(x)[0] ==
              doctest::Approx(p1.eval(x)[0] + p2.eval(x)[0]).epsilon(1e-12));
    }
}

TEST_CASE("positive layer rescaling leaves eval invariant") {
    ReluNet inner = random_shallow(2, 6, 41);
    ReluNet outer = random_shallow(1, 4, 42);
    ReluNet net = compose(outer, inner);
    for (double c : {0.5, 2.0, 7.3}) {
        ReluNet scaled = net;
        auto& ls = scaled.mutable_layers();
        ls[0].W *= c;
        ls[0].b *= c;
        ls[1].W /= c;  // bias of layer 1 untouched
        scaled.refresh_path_norm();
        auto rng = make_rng(77);
        for (int i = 0; i < 50; ++i) {
            VectorXd x = normal_vector(rng, 2);
            CHECK(scaled.eval(x)[0] == doctest::Approx(net.eval(x)[0]).epsilon(1e-10));
        }
    }
}

TEST_CASE("lift_depth preserves the function") {
    ReluNet n = random_shallow(2, 5, 61);
    ReluNet lifted = lift_depth(n, 4);
    CHECK(lifted.depth() == 4);
    auto rng = make_rng(62);
    for (int i = 0; i < 50; ++i) {
        VectorXd x = normal_vector(rng, 2);
        CHECK(lifted.eval(x)[0] == doctest::Approx(n.eval(x)[0]).epsilon(1e-12));
    }
}

TEST_CASE("precompose_affine and scale_output") {
    ReluNet n = random_shallow(2, 5, 71);
    MatrixXd A(2, 2);
    A << 0.5, 0.1, -0.3, 1.2;
    VectorXd c(2);
    c << 0.7, -0.4;
    ReluNet pre = precompose_affine(n, A, c);
    ReluNet scaled = scale_output(n, -2.5, 0.3);
    auto rng = make_rng(72);
    for (int i = 0; i < 50; ++i) {
        VectorXd x = normal_vector(rng, 2);
        CHECK(pre.eval(x)[0] == doctest::Approx(n.eval(A * x + c)[0]).epsilon(1e-12));
        CHECK(scaled.eval(x)[0] == doctest::Approx(-2.5 * n.eval(x)[0] + 0.3).epsilon(1e-12));
    }
}

TEST_CASE("batch eval matches single eval") {
    ReluNet n = compose(random_shallow(1, 4, 81), random_shallow(3, 6, 82));
    auto rng = make_rng(83);
    MatrixXd X = normal_matrix(rng, 3, 40);
    MatrixXd Y = n.eval_batch(X);
    for (int i = 0; i < 40; ++i)
        CHECK(Y(0, i) == doctest::Approx(n.eval(X.col(i))[0]).epsilon(1e-14));
}

TEST_CASE("serialization round-trips bit-exactly") {
    ReluNet n = compose(random_shallow(1, 4, 91), random_shallow(2, 6, 92));
    std::ostringstream os;
    n.save(os);
    std::istringstream is(os.str());
    ReluNet back = ReluNet::load(is);
    CHECK(back.depth() == n.depth());
    CHECK(back.path_norm() == n.path_norm());
    auto rng = make_rng(93);
    for (int i = 0; i < 20; ++i) {
        VectorXd x = normal_vector(rng, 2);
        CHECK(back.eval(x)[0] == n.eval(x)[0]);
    }
    // saving the loaded net reproduces the same bytes
    std::ostringstream os2;
    back.save(os2);
    CHECK(os2.str() == os.str());
}

TEST_CASE("dimension mismatches are rejected") {
    ReluNet n = random_shallow(2, 3, 101);
    CHECK_THROWS_AS(n.eval(VectorXd::Zero(3)), std::invalid_argument);
    CHECK_THROWS_AS(compose(n, n), std::invalid_argument);  // out_dim 1 != in_dim 2
}
