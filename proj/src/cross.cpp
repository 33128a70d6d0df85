#include "dcn/cross.hpp"

#include <cmath>

namespace dcn::cross {

CrossParams init_cross(Index dim, Index depth, Rng& rng) {
    CrossParams p;
    p.dim = dim;
    const double bound = dim > 0 ? 1.0 / std::sqrt(static_cast<double>(dim)) : 0.0;
    for (Index l = 0; l < depth; ++l) {
        Vector w(dim), b(dim);
        for (Index i = 0; i < dim; ++i) w[i] = rng.uniform(-bound, bound);
        for (Index i = 0; i < dim; ++i) b[i] = rng.uniform(-bound, bound);
        p.w.push_back(std::move(w));
        p.b.push_back(std::move(b));
    }
    return p;
}

Vector cross_layer_forward(const Vector& x0, const Vector& xl, const Vector& w, const Vector& b) {
    require(x0.size() == xl.size() && xl.size() == w.size() && w.size() == b.size(),
            "cross_layer_forward: length mismatch");
    const double s = xl.dot(w);
    return s * x0 + b + xl;
}

CrossActivations cross_forward(const CrossParams& params, const Matrix& x0) {
    require(x0.rows() == params.dim || params.depth() == 0,
            "cross_forward: input dimension does not match params");
    CrossActivations acts;
    acts.x0 = x0;
    acts.xs.push_back(x0);
    for (Index l = 0; l < params.depth(); ++l) {
        const Matrix& xl = acts.xs.back();
        Eigen::RowVectorXd s = params.w[l].transpose() * xl;  // 1 x B
        Matrix next = x0.array().rowwise() * s.array();
        next += xl;
        next.colwise() += params.b[l];
        acts.s.push_back(std::move(s));
        acts.xs.push_back(std::move(next));
    }
    return acts;
}

CrossGradients cross_backward(const CrossActivations& acts, const CrossParams& params,
                              const Matrix& grad_out) {
    const Index lc = params.depth();
    require(grad_out.rows() == acts.x0.rows() && grad_out.cols() == acts.x0.cols(),
            "cross_backward: grad shape mismatch");
    CrossGradients g;
    g.w.resize(lc);
    g.b.resize(lc);
    g.x0 = Matrix::Zero(acts.x0.rows(), acts.x0.cols());

    Matrix chain = grad_out;  // dL/dx_{l+1} flowing backwards
    for (Index l = lc - 1; l >= 0; --l) {
        const Matrix& xl = acts.xs[static_cast<std::size_t>(l)];
        const Eigen::RowVectorXd& s = acts.s[static_cast<std::size_t>(l)];
        // u_b = x0_b . g_b per example
        Eigen::RowVectorXd u = (acts.x0.array() * chain.array()).colwise().sum();
        g.b[static_cast<std::size_t>(l)] = chain.rowwise().sum();
        g.w[static_cast<std::size_t>(l)] = xl * u.transpose();
        // explicit x0 appearance in this layer
        g.x0.array() += chain.array().rowwise() * s.array();
        // dL/dx_l = g + w_l u
        chain += params.w[static_cast<std::size_t>(l)] * u;
    }
    g.x0 += chain;  // x_0 is the start of the residual chain
    return g;
}

}  // namespace dcn::cross
