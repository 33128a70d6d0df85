#include "dcn/deep.hpp"

#include <cmath>

namespace dcn::deep {

DeepParams init_deep(Index input_dim, const std::vector<Index>& sizes, bool batch_norm, Rng& rng) {
    DeepParams p;
    Index in = input_dim;
    for (Index out : sizes) {
        require(out >= 1, "init_deep: layer size must be >= 1");
        // He-style scaled uniform for ReLU stacks.
        const double bound = std::sqrt(6.0 / static_cast<double>(in));
        DeepLayer layer;
        layer.weight = Matrix(out, in);
        for (Index c = 0; c < in; ++c)
            for (Index r = 0; r < out; ++r) layer.weight(r, c) = rng.uniform(-bound, bound);
        layer.bias = Vector::Zero(out);
        p.layers.push_back(std::move(layer));
        if (batch_norm) {
            BatchNormLayer bn;
            bn.gamma = Vector::Ones(out);
            bn.beta = Vector::Zero(out);
            bn.running_mean = Vector::Zero(out);
            bn.running_var = Vector::Ones(out);
            p.bn.push_back(std::move(bn));
        }
        in = out;
    }
    return p;
}

Index deep_param_count(Index d, Index m, Index ld) {
    if (ld == 0) return 0;
    return d * m + m + (m * m + m) * (ld - 1);
}

Vector deep_layer_forward(const Matrix& w, const Vector& b, const Vector& h) {
    require(w.cols() == h.size(), "deep_layer_forward: shape mismatch");
    require(w.rows() == b.size(), "deep_layer_forward: bias length mismatch");
    return ((w * h + b).array().max(0.0)).matrix();
}

DeepActivations deep_forward(DeepParams& params, const Matrix& x, Mode mode) {
    DeepActivations acts;
    acts.input = x;
    const Index batch = x.cols();
    Matrix cur = x;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const DeepLayer& layer = params.layers[l];
        require(layer.weight.cols() == cur.rows(), "deep_forward: shape mismatch at layer " +
                                                       std::to_string(l));
        Matrix z = layer.weight * cur;
        z.colwise() += layer.bias;
        acts.z.push_back(z);

        if (params.has_bn()) {
            BatchNormLayer& bn = params.bn[l];
            Vector mean, var;
            if (mode == Mode::kTrain) {
                mean = z.rowwise().mean();
                Matrix centered = z.colwise() - mean;
                var = centered.array().square().rowwise().mean();
                bn.running_mean = bn.momentum * bn.running_mean + (1.0 - bn.momentum) * mean;
                bn.running_var = bn.momentum * bn.running_var + (1.0 - bn.momentum) * var;
            } else {
                mean = bn.running_mean;
                var = bn.running_var;
            }
            Vector inv_std = (var.array() + bn.epsilon).sqrt().inverse();
            Matrix zhat = (z.colwise() - mean).array().colwise() * inv_std.array();
            Matrix scaled = zhat.array().colwise() * bn.gamma.array();
            scaled.colwise() += bn.beta;
            acts.batch_mean.push_back(std::move(mean));
            acts.batch_var.push_back(std::move(var));
            acts.zhat.push_back(std::move(zhat));
            z = std::move(scaled);
        }

        Matrix h = z.array().max(0.0);
        acts.h.push_back(h);
        cur = std::move(h);
    }
    (void)batch;
    return acts;
}

DeepGradients deep_backward(const DeepActivations& acts, const DeepParams& params,
                            const Matrix& grad_out) {
    const std::size_t n = params.layers.size();
    DeepGradients g;
    g.weight.resize(n);
    g.bias.resize(n);
    if (params.has_bn()) {
        g.gamma.resize(n);
        g.beta.resize(n);
    }

    Matrix chain = grad_out;  // dL/dh_l
    for (std::size_t l = n; l-- > 0;) {
        const DeepLayer& layer = params.layers[l];
        const Matrix& h = acts.h[l];
        // ReLU mask on the post-bn (or affine) value that fed the max
        Matrix dpre = (h.array() > 0.0).select(chain, Matrix::Zero(chain.rows(), chain.cols()));

        if (params.has_bn()) {
            const BatchNormLayer& bn = params.bn[l];
            const Matrix& zhat = acts.zhat[l];
            const double b = static_cast<double>(dpre.cols());
            Vector inv_std = (acts.batch_var[l].array() + bn.epsilon).sqrt().inverse();
            g.gamma[l] = (dpre.array() * zhat.array()).rowwise().sum();
            g.beta[l] = dpre.rowwise().sum();
            // dL/dz for normalization over the batch dimension
            Matrix dzhat = dpre.array().colwise() * bn.gamma.array();
            Vector mean_dzhat = dzhat.rowwise().mean();
            Vector mean_dzhat_zhat = (dzhat.array() * zhat.array()).rowwise().mean();
            Matrix dz = ((dzhat.colwise() - mean_dzhat).array() -
                         zhat.array().colwise() * mean_dzhat_zhat.array())
                            .colwise() *
                        inv_std.array();
            (void)b;
            dpre = std::move(dz);
        }

        const Matrix& in = l == 0 ? acts.input : acts.h[l - 1];
        g.weight[l] = dpre * in.transpose();
        g.bias[l] = dpre.rowwise().sum();
        chain = layer.weight.transpose() * dpre;
    }
    g.input = std::move(chain);
    return g;
}

}  // namespace dcn::deep
