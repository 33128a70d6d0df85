#pragma once

#include "dcn/linalg.hpp"
#include "dcn/rng.hpp"

#include <vector>

namespace dcn::cross {

// Weights of an L_c-layer cross network over inputs of dimension d.
struct CrossParams {
    std::vector<Vector> w;  // one length-d vector per layer
    std::vector<Vector> b;
    Index dim = 0;

    Index depth() const { return static_cast<Index>(w.size()); }
};

CrossParams init_cross(Index dim, Index depth, Rng& rng);

inline Index cross_param_count(Index d, Index lc) { return d * lc * 2; }

// x0 (xl . w) + b + xl for a single example. The rank-one product is
// evaluated as a scalar followed by an axpy; no d x d intermediate exists.
Vector cross_layer_forward(const Vector& x0, const Vector& xl, const Vector& w, const Vector& b);

// Batched activations: columns are examples.
struct CrossActivations {
    Matrix x0;                            // d x B
    std::vector<Matrix> xs;               // xs[l] = x_l, l = 0..L_c (xs[0] aliases x0)
    std::vector<Eigen::RowVectorXd> s;    // s[l] = w_l^T x_l per example

    const Matrix& output() const { return xs.back(); }
};

CrossActivations cross_forward(const CrossParams& params, const Matrix& x0);

struct CrossGradients {
    std::vector<Vector> w;
    std::vector<Vector> b;
    Matrix x0;  // d x B, accumulated over every layer plus the residual chain
};

CrossGradients cross_backward(const CrossActivations& acts, const CrossParams& params,
                              const Matrix& grad_out);

}  // namespace dcn::cross
