#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "scorelab/quadrature.hpp"

using namespace scorelab;

TEST_CASE("gauss-hermite weights sum to one and integrate moments") {
    for (int order : {8, 24, 64}) {
        auto gh = GaussHermite::probabilists(order);
        CHECK(std::abs(gh.weights.sum() - 1.0) < 1e-12);
        // E[U^2] = 1, E[U^4] = 3 under N(0,1)
        double m2 = (gh.weights.array() * gh.nodes.array().square()).sum();
        double m4 = (gh.weights.array() * gh.nodes.array().pow(4)).sum();
        CHECK(m2 == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(m4 == doctest::Approx(3.0).epsilon(1e-10));
        // E[e^U] = e^{1/2}, entire integrand (order 8 carries truncation error)
        double me = (gh.weights.array() * gh.nodes.array().exp()).sum();
        CHECK(me == doctest::Approx(std::exp(0.5)).epsilon(order >= 24 ? 1e-12 : 1e-5));
    }
}

TEST_CASE("tensor rule integrates separable functions") {
    auto t = TensorGaussHermite::probabilists(2, 16);
    CHECK(std::abs(t.weights.sum() - 1.0) < 1e-12);
    // E[u1^2 u2^2] = 1
    double acc = 0.0;
    for (Eigen::Index i = 0; i < t.weights.size(); ++i)
        acc += t.weights[i] * t.nodes(0, i) * t.nodes(0, i) * t.nodes(1, i) * t.nodes(1, i);
    CHECK(acc == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("adaptive simpson hits analytic integrals") {
    double v = adaptive_simpson([](double x) { return std::exp(x); }, 0.0, 1.0, 1e-12);
    CHECK(v == doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-12));
    double g = adaptive_simpson([](double x) { return std::exp(-0.5 * x * x); }, -12.0, 12.0,
                                1e-12);
    CHECK(g == doctest::Approx(std::sqrt(2.0 * M_PI)).epsilon(1e-10));
}
