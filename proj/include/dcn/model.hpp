#pragma once

#include "dcn/cross.hpp"
#include "dcn/deep.hpp"
#include "dcn/embedding.hpp"
#include "dcn/linalg.hpp"
#include "dcn/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dcn::model {

using deep::Mode;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ModelConfig {
    Index dense_count = 0;
    std::vector<embed::FieldSpec> fields;
    Index cross_layers = 0;
    std::vector<Index> deep_sizes;
    bool batch_norm = false;
    Index num_classes = 2;  // 2 = sigmoid head, >2 = softmax head
    bool logits_bias = false;
    // With zero cross layers the default is a genuinely cross-free model
    // (logits see only the deep output); this flag instead degrades the
    // concatenation to [x_0^T, h^T].
    bool concat_x0_when_no_cross = false;
    double lambda = 0.0;

    Index input_dim() const;   // d = sum of embed dims + dense_count
    Index logits_input_dim() const;
    bool cross_branch_active() const { return cross_layers > 0 || concat_x0_when_no_cross; }
    bool deep_branch_active() const { return !deep_sizes.empty(); }
    void validate() const;
};

struct ModelParams {
    ModelConfig config;
    embed::EmbeddingTable embedding;
    cross::CrossParams cross;
    deep::DeepParams deep;
    Matrix w_logits;  // rows = 1 (binary) or num_classes, cols = logits_input_dim
    Vector b_logits;  // empty unless logits_bias
};

ModelParams init_model(const ModelConfig& config, Rng& rng);

// Structural mirror of the trainable tensors of ModelParams.
struct Gradients {
    std::vector<Matrix> embedding;
    cross::CrossGradients cross;
    deep::DeepGradients deep;
    Matrix w_logits;
    Vector b_logits;
};

Gradients zero_gradients(const ModelParams& params);

// Fixed traversal order shared by the optimizer, gradient clipping and the
// checkpoint: embeddings, cross w/b per layer, deep W/b (+gamma/beta) per
// layer, logits weight, logits bias. Running BN stats are not trainable and
// appear only in checkpoint_views.
std::vector<TensorView> trainable_views(ModelParams& params);
std::vector<TensorView> trainable_views(Gradients& grads);
std::vector<TensorView> checkpoint_views(ModelParams& params);

// Views of the weights covered by the L2 term: cross w_l, deep W_l and the
// logits weight. Biases, embeddings and batch-norm parameters are excluded.
std::vector<TensorView> regularized_views(ModelParams& params);
std::vector<TensorView> regularized_views(Gradients& grads);

Index param_count(const ModelParams& params);

struct Batch {
    Matrix dense;                                  // dense_count x B
    std::vector<std::vector<Index>> categorical;   // [field][example] -> id
    std::vector<int> labels;

    Index size() const { return static_cast<Index>(labels.size()); }
};

struct ForwardCache {
    Matrix x0;                       // d x B
    cross::CrossActivations cross;
    deep::DeepActivations deep;
    Matrix logits_input;             // concat of active branches
    Matrix logits;                   // K' x B
    Matrix probs;                    // 1 x B sigmoid or K x B softmax
    std::vector<std::vector<Index>> categorical;  // for embedding backward
    bool train_mode = false;
};

ForwardCache model_forward(ModelParams& params, const Batch& batch, Mode mode);

// Mean negative log likelihood plus lambda * sum ||w||^2 over regularized
// weights. Probabilities are clamped to [1e-15, 1 - 1e-15].
double logloss(const Matrix& probs, const std::vector<int>& labels, ModelParams& params,
               double lambda);

Gradients model_backward(const ForwardCache& cache, ModelParams& params,
                         const std::vector<int>& labels);

double accuracy(const Matrix& probs, const std::vector<int>& labels);

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void checkpoint_save(ModelParams& params, const std::string& path);
ModelParams checkpoint_load(const std::string& path);

}  // namespace dcn::model
