#pragma once

#include <functional>

#include "scorelab/common.hpp"

namespace scorelab {

// Gauss-Hermite rule for the standard Gaussian weight: sum w_i h(u_i) ~ E[h(U)],
// U ~ N(0,1). Weights sum to 1.
struct GaussHermite {
    VectorXd nodes;
    VectorXd weights;
    static GaussHermite probabilists(int order);
};

// Tensorized rule over N(0, I_d). nodes: d x order^d, weights: order^d.
struct TensorGaussHermite {
    MatrixXd nodes;
    VectorXd weights;
    static TensorGaussHermite probabilists(int dim, int order);
};

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-10, int max_depth = 40);

// Composite Simpson on a uniform grid (n intervals, n even).
double simpson_uniform(const std::function<double(double)>& f, double a, double b, int n);

}  // namespace scorelab
