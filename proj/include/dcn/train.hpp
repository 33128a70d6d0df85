#pragma once

#include "dcn/data.hpp"
#include "dcn/linalg.hpp"
#include "dcn/model.hpp"
#include "dcn/rng.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dcn::train {

struct TrainConfig {
    Index batch_size = 512;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double clip_norm = 100.0;
    double lambda = 0.0;
    long max_steps = 1000;
    long eval_every = 100;
    long early_stop_patience = 10;  // evaluations without improvement
    std::uint64_t seed = 0;

    void validate() const {
        require(batch_size >= 1, "batch_size must be >= 1");
        require(learning_rate > 0, "learning_rate must be > 0");
        require(clip_norm > 0, "clip_norm must be > 0");
        require(eval_every >= 1, "eval_every must be >= 1");
    }
};

// Scale every gradient by clip_norm / ||g|| when the global norm exceeds
// clip_norm; direction is preserved exactly.
void clip_gradients(std::vector<TensorView>& grads, double clip_norm);

struct AdamState {
    std::vector<Vector> m;
    std::vector<Vector> v;
    long t = 0;

    static AdamState init(const std::vector<TensorView>& params);
};

void adam_step(AdamState& state, std::vector<TensorView>& params,
               const std::vector<TensorView>& grads, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double epsilon = 1e-8);

struct EvalResult {
    double logloss = 0.0;
    double accuracy = 0.0;
};

EvalResult evaluate(model::ModelParams& params, const std::vector<data::Example>& examples,
                    Index batch_size = 4096);

struct MetricsRecord {
    long step = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    model::ModelParams best;
    std::vector<MetricsRecord> history;
    double best_val_loss = 0.0;
    long best_step = 0;
    long steps_run = 0;
};

struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Mini-batch Adam over shuffled epochs with periodic validation, gradient
// clipping and patience-based early stopping. The returned model is the
// best-validation checkpoint, not the final state. A non-finite loss aborts
// with step diagnostics.
TrainResult train(const TrainConfig& config, model::ModelParams params,
                  const std::vector<data::Example>& train_set,
                  const std::vector<data::Example>& val_set,
                  const std::function<void(const MetricsRecord&)>& on_metrics = nullptr);

struct GridPoint {
    Index deep_layer_count = 0;
    Index deep_size = 0;
    Index cross_layers = 0;
    double learning_rate = 0.0;
};

struct GridSpec {
    std::vector<Index> deep_layer_counts;
    std::vector<Index> deep_sizes;
    std::vector<Index> cross_layer_counts;
    std::vector<double> learning_rates;

    std::vector<GridPoint> points() const;
};

struct GridResult {
    GridPoint point;
    double best_val_loss = 0.0;
    Index param_count = 0;
    long steps_run = 0;
    bool failed = false;
    std::string error;
};

// Trains every combination (independent seeded stream per combination) and
// returns rows sorted ascending by best validation loss; failures sort last.
std::vector<GridResult> grid_search(const GridSpec& grid, const TrainConfig& config,
                                    const model::ModelConfig& model_template,
                                    const std::vector<data::Example>& train_set,
                                    const std::vector<data::Example>& val_set);

}  // namespace dcn::train
