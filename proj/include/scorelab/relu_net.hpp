#pragma once

#include <iosfwd>
#include <vector>

#include "scorelab/common.hpp"

namespace scorelab {

// One affine map y = W x + b. ReLU is applied between consecutive layers of a
// ReluNet, never after the last.
struct AffineLayer {
    MatrixXd W;
    VectorXd b;

    Eigen::Index out() const { return W.rows(); }
    Eigen::Index in() const { return W.cols(); }
};

// Fully connected feedforward ReLU network as an explicit list of affine
// layers. depth() counts affine layers, so a shallow network has depth 2.
//
// The path norm is the representation value computed from the stored weights:
//   c^1_i    = |W_1[i,:]|_1 + |b_1[i]|
//   c^k_i    = sum_j |W_k[i,j]| c^{k-1}_j + |b_k[i]|     (1 < k < depth)
//   result   = max over outputs r of sum_j |W_L[r,j]| c^{L-1}_j
// For a shallow scalar network this is exactly sum_i |a_i| (|w_i|_1 + |b_i|)
// (the output bias does not contribute). The value is an upper bound on the
// infimum over all representations; compose() additionally records the
// product-of-factors bound when that is smaller.
class ReluNet {
  public:
    ReluNet() = default;
    explicit ReluNet(std::vector<AffineLayer> layers);

    int in_dim() const;
    int out_dim() const;
    int depth() const { return int(layers_.size()); }
    bool empty() const { return layers_.empty(); }

    VectorXd eval(const VectorXd& x) const;
    // X: in_dim x n  ->  out_dim x n
    MatrixXd eval_batch(const MatrixXd& X) const;

    double path_norm() const { return path_norm_; }
    // Recompute the representation value (used after in-place weight updates).
    void refresh_path_norm();
    void set_recorded_path_norm(double v) { path_norm_ = v; }

    const std::vector<AffineLayer>& layers() const { return layers_; }
    std::vector<AffineLayer>& mutable_layers() { return layers_; }

    void save(std::ostream& os) const;
    void save_file(const std::string& path) const;
    static ReluNet load(std::istream& is);
    static ReluNet load_file(const std::string& path);

  private:
    std::vector<AffineLayer> layers_;
    double path_norm_ = 0.0;
};

// Path norm of the representation (ignores any recorded value).
double representation_path_norm(const std::vector<AffineLayer>& layers);

// Same recursion with the first layer adjusted for an input substitution
// x -> scale*x + c with |c|_inf <= shift_bound. Upper-bounds the path norm of
// the precomposed network without materializing it.
double path_norm_precomposed_bound(const ReluNet& net, double scale, double shift_bound);

// outer(inner(x)). The boundary affine pair merges, so depth is
// inner.depth() + outer.depth() - 1. The recorded path norm is
// min(representation value, path_norm(outer)*path_norm(inner)).
ReluNet compose(const ReluNet& outer, const ReluNet& inner);

// sum_k coeffs[k] * parts[k](x) + bias for scalar-output parts of equal depth
// and equal input dimension. Hidden layers are stacked block-diagonally.
ReluNet parallel_sum(const std::vector<ReluNet>& parts, const VectorXd& coeffs, double bias);

// x = (x)+ - (-x)+ as a depth-2 network.
ReluNet identity_net(int dim);

// Pad with identity compositions until depth() == target_depth.
ReluNet lift_depth(const ReluNet& net, int target_depth);

// net(A x + c) by folding the affine map into the first layer.
ReluNet precompose_affine(const ReluNet& net, const MatrixXd& A, const VectorXd& c);

// s * net(x) (+ shift on every output) by scaling the last layer.
ReluNet scale_output(const ReluNet& net, double s, double shift = 0.0);

// Shallow scalar network sum_i a_i (w_i . x + b_i)^+ + out_bias.
// w rows are neurons: w is m x d.
ReluNet shallow_net(const MatrixXd& w, const VectorXd& b, const VectorXd& a, double out_bias);

}  // namespace scorelab
