#pragma once

#include "dcn/linalg.hpp"
#include "dcn/rng.hpp"

#include <optional>
#include <vector>

namespace dcn::deep {

enum class Mode { kTrain, kEval };

struct DeepLayer {
    Matrix weight;  // n_{l+1} x n_l
    Vector bias;    // n_{l+1}
};

// Per-layer batch normalization of the affine pre-activation, before ReLU.
struct BatchNormLayer {
    Vector gamma;
    Vector beta;
    Vector running_mean;
    Vector running_var;
    double momentum = 0.99;
    double epsilon = 1e-5;
};

struct DeepParams {
    std::vector<DeepLayer> layers;
    std::vector<BatchNormLayer> bn;  // empty when batch norm is off

    Index depth() const { return static_cast<Index>(layers.size()); }
    bool has_bn() const { return !bn.empty(); }
    Index output_dim(Index input_dim) const {
        return layers.empty() ? input_dim : layers.back().bias.size();
    }
};

DeepParams init_deep(Index input_dim, const std::vector<Index>& sizes, bool batch_norm, Rng& rng);

// d*m + m + (m^2+m)*(Ld-1); equal layer sizes assumed. Ld = 0 counts 0.
Index deep_param_count(Index d, Index m, Index ld);

// ReLU(W h + b) for a single example, no batch norm.
Vector deep_layer_forward(const Matrix& w, const Vector& b, const Vector& h);

struct DeepActivations {
    Matrix input;                  // n_0 x B
    std::vector<Matrix> z;         // affine pre-activation per layer
    std::vector<Matrix> zhat;      // normalized pre-activation (bn only)
    std::vector<Vector> batch_mean;
    std::vector<Vector> batch_var;
    std::vector<Matrix> h;         // post-ReLU output per layer

    const Matrix& output() const { return h.empty() ? input : h.back(); }
};

// In train mode batch norm uses batch statistics and updates the running
// stats in `params`; eval mode reads the running stats.
DeepActivations deep_forward(DeepParams& params, const Matrix& x, Mode mode);

struct DeepGradients {
    std::vector<Matrix> weight;
    std::vector<Vector> bias;
    std::vector<Vector> gamma;
    std::vector<Vector> beta;
    Matrix input;  // dL/dx
};

DeepGradients deep_backward(const DeepActivations& acts, const DeepParams& params,
                            const Matrix& grad_out);

}  // namespace dcn::deep
