#include "dcn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace dcn::train {

void clip_gradients(std::vector<TensorView>& grads, double clip_norm) {
    require(clip_norm > 0, "clip_gradients: clip_norm must be > 0");
    const double norm = global_norm(grads);
    if (norm <= clip_norm || norm == 0.0) return;
    const double scale = clip_norm / norm;
    for (auto& g : grads) {
        for (Index i = 0; i < g.size; ++i) g.data[i] *= scale;
    }
}

AdamState AdamState::init(const std::vector<TensorView>& params) {
    AdamState s;
    for (const auto& p : params) {
        s.m.push_back(Vector::Zero(p.size));
        s.v.push_back(Vector::Zero(p.size));
    }
    return s;
}

void adam_step(AdamState& state, std::vector<TensorView>& params,
               const std::vector<TensorView>& grads, double lr, double beta1, double beta2,
               double epsilon) {
    require(params.size() == grads.size() && params.size() == state.m.size(),
            "adam_step: tensor count mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t k = 0; k < params.size(); ++k) {
        require(params[k].size == grads[k].size, "adam_step: tensor shape mismatch");
        double* p = params[k].data;
        const double* g = grads[k].data;
        double* m = state.m[k].data();
        double* v = state.v[k].data();
        for (Index i = 0; i < params[k].size; ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + epsilon);
        }
    }
}

namespace {

model::Batch make_batch(const std::vector<data::Example>& examples,
                        const std::vector<std::size_t>& order, std::size_t begin, std::size_t end,
                        const model::ModelConfig& cfg) {
    model::Batch batch;
    const Index b = static_cast<Index>(end - begin);
    batch.dense = Matrix(cfg.dense_count, b);
    batch.categorical.resize(cfg.fields.size());
    for (auto& v : batch.categorical) v.reserve(static_cast<std::size_t>(b));
    batch.labels.reserve(static_cast<std::size_t>(b));
    for (std::size_t k = begin; k < end; ++k) {
        const data::Example& ex = examples[order[k]];
        const Index col = static_cast<Index>(k - begin);
        require(ex.dense.size() == cfg.dense_count, "batch: dense feature count mismatch");
        batch.dense.col(col) = ex.dense;
        for (std::size_t f = 0; f < cfg.fields.size(); ++f)
            batch.categorical[f].push_back(f < ex.categorical.size() ? ex.categorical[f] : 0);
        batch.labels.push_back(ex.label);
    }
    return batch;
}

}  // namespace

EvalResult evaluate(model::ModelParams& params, const std::vector<data::Example>& examples,
                    Index batch_size) {
    require(!examples.empty(), "evaluate: empty dataset");
    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    double loss_sum = 0.0;
    double acc_sum = 0.0;
    std::size_t n = 0;
    for (std::size_t at = 0; at < examples.size(); at += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(examples.size(), at + static_cast<std::size_t>(batch_size));
        model::Batch batch = make_batch(examples, order, at, end, params.config);
        auto cache = model::model_forward(params, batch, model::Mode::kEval);
        const double ll = model::logloss(cache.probs, batch.labels, params, 0.0);
        const double acc = model::accuracy(cache.probs, batch.labels);
        const double w = static_cast<double>(end - at);
        loss_sum += ll * w;
        acc_sum += acc * w;
        n += end - at;
    }
    return {loss_sum / static_cast<double>(n), acc_sum / static_cast<double>(n)};
}

TrainResult train(const TrainConfig& config, model::ModelParams params,
                  const std::vector<data::Example>& train_set,
                  const std::vector<data::Example>& val_set,
                  const std::function<void(const MetricsRecord&)>& on_metrics) {
    config.validate();
    require(!train_set.empty() && !val_set.empty(), "train: datasets must be non-empty");
    params.config.lambda = config.lambda;  // loss and gradients must agree on the ridge term

    TrainResult result;
    result.best = params;
    result.best_val_loss = std::numeric_limits<double>::infinity();

    if (config.max_steps == 0) return result;

    Rng rng(config.seed);
    auto param_views = model::trainable_views(params);
    AdamState adam = AdamState::init(param_views);

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = order.size();  // triggers a shuffle on the first batch

    long step = 0;
    long evals_since_improvement = 0;
    double last_train_loss = 0.0;
    while (step < config.max_steps) {
        if (cursor >= order.size()) {
            for (std::size_t i = order.size(); i > 1; --i) {
                const std::size_t j = rng.uniform_int(i);
                std::swap(order[i - 1], order[j]);
            }
            cursor = 0;
        }
        const std::size_t end =
            std::min(order.size(), cursor + static_cast<std::size_t>(config.batch_size));
        model::Batch batch = make_batch(train_set, order, cursor, end, params.config);
        cursor = end;

        auto cache = model::model_forward(params, batch, model::Mode::kTrain);
        last_train_loss = model::logloss(cache.probs, batch.labels, params, config.lambda);
        if (!std::isfinite(last_train_loss))
            throw TrainingError("non-finite training loss at step " + std::to_string(step) +
                                " (lr=" + std::to_string(config.learning_rate) +
                                ", batch starting at " + std::to_string(cursor) + ")");
        auto grads = model::model_backward(cache, params, batch.labels);
        auto grad_views = model::trainable_views(grads);
        clip_gradients(grad_views, config.clip_norm);
        adam_step(adam, param_views, grad_views, config.learning_rate, config.beta1, config.beta2,
                  config.adam_epsilon);
        ++step;

        if (step % config.eval_every == 0 || step == config.max_steps) {
            const EvalResult ev = evaluate(params, val_set);
            MetricsRecord rec{step, last_train_loss, ev.logloss, ev.accuracy};
            result.history.push_back(rec);
            if (on_metrics) on_metrics(rec);
            if (ev.logloss < result.best_val_loss) {
                result.best_val_loss = ev.logloss;
                result.best_step = step;
                result.best = params;
                evals_since_improvement = 0;
            } else {
                ++evals_since_improvement;
                if (evals_since_improvement >= config.early_stop_patience) break;
            }
        }
    }
    result.steps_run = step;
    return result;
}

std::vector<GridPoint> GridSpec::points() const {
    require(!deep_layer_counts.empty() && !deep_sizes.empty() && !cross_layer_counts.empty() &&
                !learning_rates.empty(),
            "grid: all lists must be non-empty");
    std::vector<GridPoint> out;
    for (Index layers : deep_layer_counts)
        for (Index size : deep_sizes)
            for (Index lc : cross_layer_counts)
                for (double lr : learning_rates) out.push_back({layers, size, lc, lr});
    return out;
}

std::vector<GridResult> grid_search(const GridSpec& grid, const TrainConfig& config,
                                    const model::ModelConfig& model_template,
                                    const std::vector<data::Example>& train_set,
                                    const std::vector<data::Example>& val_set) {
    const auto points = grid.points();
    std::vector<GridResult> results;
    Rng base(config.seed);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const GridPoint& pt = points[i];
        GridResult row;
        row.point = pt;
        try {
            model::ModelConfig mc = model_template;
            mc.cross_layers = pt.cross_layers;
            mc.deep_sizes.assign(static_cast<std::size_t>(pt.deep_layer_count), pt.deep_size);
            TrainConfig tc = config;
            tc.learning_rate = pt.learning_rate;
            // stream keyed on the combination itself so a point's result does
            // not depend on where it sits in the grid
            std::uint64_t key = 0xcbf29ce484222325ULL;
            auto mix = [&key](std::uint64_t v) {
                key ^= v;
                key *= 0x100000001b3ULL;
            };
            mix(static_cast<std::uint64_t>(pt.deep_layer_count));
            mix(static_cast<std::uint64_t>(pt.deep_size));
            mix(static_cast<std::uint64_t>(pt.cross_layers));
            std::uint64_t lr_bits;
            std::memcpy(&lr_bits, &pt.learning_rate, sizeof(lr_bits));
            mix(lr_bits);
            Rng rng = base.split(key);
            tc.seed = rng.next_u64();
            model::ModelParams params = model::init_model(mc, rng);
            row.param_count = model::param_count(params);
            TrainResult tr = train(tc, std::move(params), train_set, val_set);
            row.best_val_loss = tr.best_val_loss;
            row.steps_run = tr.steps_run;
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
            row.best_val_loss = std::numeric_limits<double>::infinity();
        }
        results.push_back(std::move(row));
    }
    std::stable_sort(results.begin(), results.end(),
                     [](const GridResult& a, const GridResult& b) {
                         return a.best_val_loss < b.best_val_loss;
                     });
    return results;
}

}  // namespace dcn::train
