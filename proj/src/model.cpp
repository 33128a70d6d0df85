#include "dcn/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace dcn::model {

namespace {
constexpr double kProbFloor = 1e-15;
}

Index ModelConfig::input_dim() const {
    Index d = dense_count;
    for (const auto& f : fields) d += f.embed_dim;
    return d;
}

Index ModelConfig::logits_input_dim() const {
    Index d = 0;
    if (cross_branch_active()) d += input_dim();
    if (deep_branch_active()) d += deep_sizes.back();
    return d;
}

void ModelConfig::validate() const {
    if (input_dim() <= 0) throw ConfigError("model has no input features");
    if (!cross_branch_active() && !deep_branch_active())
        throw ConfigError("both branches disabled; enable cross layers, the deep stack, or "
                          "concat_x0_when_no_cross");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    for (const auto& f : fields) {
        if (f.vocab_size < 1 || f.embed_dim < 1) throw ConfigError("bad field spec");
    }
}

ModelParams init_model(const ModelConfig& config, Rng& rng) {
    config.validate();
    ModelParams p;
    p.config = config;
    p.embedding = embed::init_embedding(config.fields, rng);
    p.cross = cross::init_cross(config.input_dim(), config.cross_layers, rng);
    p.deep = deep::init_deep(config.input_dim(), config.deep_sizes, config.batch_norm, rng);
    const Index rows = config.num_classes == 2 ? 1 : config.num_classes;
    const Index cols = config.logits_input_dim();
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    p.w_logits = Matrix(rows, cols);
    for (Index c = 0; c < cols; ++c)
        for (Index r = 0; r < rows; ++r) p.w_logits(r, c) = rng.uniform(-bound, bound);
    p.b_logits = config.logits_bias ? Vector::Zero(rows) : Vector();
    return p;
}

Gradients zero_gradients(const ModelParams& params) {
    Gradients g;
    for (const auto& t : params.embedding.tables) g.embedding.push_back(Matrix::Zero(t.rows(), t.cols()));
    for (const auto& w : params.cross.w) g.cross.w.push_back(Vector::Zero(w.size()));
    for (const auto& b : params.cross.b) g.cross.b.push_back(Vector::Zero(b.size()));
    for (const auto& l : params.deep.layers) {
        g.deep.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
        g.deep.bias.push_back(Vector::Zero(l.bias.size()));
    }
    for (const auto& bn : params.deep.bn) {
        g.deep.gamma.push_back(Vector::Zero(bn.gamma.size()));
        g.deep.beta.push_back(Vector::Zero(bn.beta.size()));
    }
    g.w_logits = Matrix::Zero(params.w_logits.rows(), params.w_logits.cols());
    g.b_logits = Vector::Zero(params.b_logits.size());
    return g;
}

namespace {

template <typename E, typename C, typename D, typename L, typename LB>
void visit_trainables(E&& emb, C&& crossv, D&& deepv, L&& logits, LB&& logits_bias) {
    emb();
    crossv();
    deepv();
    logits();
    logits_bias();
}

TensorView view_of(Matrix& m) { return {m.data(), m.size()}; }
TensorView view_of(Vector& v) { return {v.data(), v.size()}; }

}  // namespace

std::vector<TensorView> trainable_views(ModelParams& p) {
    std::vector<TensorView> out;
    for (auto& t : p.embedding.tables) out.push_back(view_of(t));
    for (std::size_t l = 0; l < p.cross.w.size(); ++l) {
        out.push_back(view_of(p.cross.w[l]));
        out.push_back(view_of(p.cross.b[l]));
    }
    for (std::size_t l = 0; l < p.deep.layers.size(); ++l) {
        out.push_back(view_of(p.deep.layers[l].weight));
        out.push_back(view_of(p.deep.layers[l].bias));
        if (p.deep.has_bn()) {
            out.push_back(view_of(p.deep.bn[l].gamma));
            out.push_back(view_of(p.deep.bn[l].beta));
        }
    }
    out.push_back(view_of(p.w_logits));
    if (p.b_logits.size() > 0) out.push_back(view_of(p.b_logits));
    return out;
}

std::vector<TensorView> trainable_views(Gradients& g) {
    std::vector<TensorView> out;
    for (auto& t : g.embedding) out.push_back(view_of(t));
    for (std::size_t l = 0; l < g.cross.w.size(); ++l) {
        out.push_back(view_of(g.cross.w[l]));
        out.push_back(view_of(g.cross.b[l]));
    }
    const bool bn = !g.deep.gamma.empty();
    for (std::size_t l = 0; l < g.deep.weight.size(); ++l) {
        out.push_back(view_of(g.deep.weight[l]));
        out.push_back(view_of(g.deep.bias[l]));
        if (bn) {
            out.push_back(view_of(g.deep.gamma[l]));
            out.push_back(view_of(g.deep.beta[l]));
        }
    }
    out.push_back(view_of(g.w_logits));
    if (g.b_logits.size() > 0) out.push_back(view_of(g.b_logits));
    return out;
}

std::vector<TensorView> checkpoint_views(ModelParams& p) {
    std::vector<TensorView> out = trainable_views(p);
    for (auto& bn : p.deep.bn) {
        out.push_back(view_of(bn.running_mean));
        out.push_back(view_of(bn.running_var));
    }
    return out;
}

std::vector<TensorView> regularized_views(ModelParams& p) {
    std::vector<TensorView> out;
    for (auto& w : p.cross.w) out.push_back(view_of(w));
    for (auto& l : p.deep.layers) out.push_back(view_of(l.weight));
    out.push_back(view_of(p.w_logits));
    return out;
}

std::vector<TensorView> regularized_views(Gradients& g) {
    std::vector<TensorView> out;
    for (auto& w : g.cross.w) out.push_back(view_of(w));
    for (auto& w : g.deep.weight) out.push_back(view_of(w));
    out.push_back(view_of(g.w_logits));
    return out;
}

Index param_count(const ModelParams& params) {
    Index n = 0;
    for (auto v : trainable_views(const_cast<ModelParams&>(params))) n += v.size;
    return n;
}

ForwardCache model_forward(ModelParams& params, const Batch& batch, Mode mode) {
    const ModelConfig& cfg = params.config;
    const Index b = batch.size();
    require(b >= 1, "model_forward: empty batch");
    require(batch.dense.rows() == cfg.dense_count, "model_forward: dense feature count mismatch");
    require(batch.dense.cols() == b, "model_forward: dense column count mismatch");
    if (static_cast<Index>(batch.categorical.size()) != static_cast<Index>(cfg.fields.size()))
        throw ConfigError("model_forward: categorical field count mismatch");

    ForwardCache cache;
    cache.train_mode = mode == Mode::kTrain;
    cache.categorical = batch.categorical;

    const Index d = cfg.input_dim();
    cache.x0 = Matrix(d, b);
    for (Index ex = 0; ex < b; ++ex) {
        Index at = 0;
        for (std::size_t f = 0; f < cfg.fields.size(); ++f) {
            const Vector e = embed::embed_lookup(params.embedding, static_cast<Index>(f),
                                                batch.categorical[f][static_cast<std::size_t>(ex)]);
            cache.x0.col(ex).segment(at, e.size()) = e;
            at += e.size();
        }
        cache.x0.col(ex).segment(at, cfg.dense_count) = batch.dense.col(ex);
    }

    Index logits_dim = 0;
    if (cfg.cross_branch_active()) {
        cache.cross = cross::cross_forward(params.cross, cache.x0);
        logits_dim += d;
    }
    if (cfg.deep_branch_active()) {
        cache.deep = deep::deep_forward(params.deep, cache.x0, mode);
        logits_dim += cfg.deep_sizes.back();
    }

    cache.logits_input = Matrix(logits_dim, b);
    Index at = 0;
    if (cfg.cross_branch_active()) {
        cache.logits_input.topRows(d) = cache.cross.output();
        at += d;
    }
    if (cfg.deep_branch_active()) cache.logits_input.bottomRows(cfg.deep_sizes.back()) = cache.deep.output();

    cache.logits = params.w_logits * cache.logits_input;
    if (params.b_logits.size() > 0) cache.logits.colwise() += params.b_logits;

    if (cfg.num_classes == 2) {
        cache.probs = (1.0 / (1.0 + (-cache.logits.array()).exp())).matrix();
    } else {
        cache.probs = Matrix(cfg.num_classes, b);
        for (Index ex = 0; ex < b; ++ex) {
            Vector z = cache.logits.col(ex);
            const double zmax = z.maxCoeff();
            Vector e = (z.array() - zmax).exp();
            cache.probs.col(ex) = e / e.sum();
        }
    }
    (void)at;
    return cache;
}

double logloss(const Matrix& probs, const std::vector<int>& labels, ModelParams& params,
               double lambda) {
    const Index n = static_cast<Index>(labels.size());
    require(n >= 1, "logloss: empty batch");
    require(probs.cols() == n, "logloss: batch size mismatch");
    double total = 0.0;
    if (probs.rows() == 1) {
        for (Index i = 0; i < n; ++i) {
            const double p = std::clamp(probs(0, i), kProbFloor, 1.0 - kProbFloor);
            total += labels[static_cast<std::size_t>(i)] == 1 ? -std::log(p) : -std::log(1.0 - p);
        }
    } else {
        for (Index i = 0; i < n; ++i) {
            const int y = labels[static_cast<std::size_t>(i)];
            require(y >= 0 && y < probs.rows(), "logloss: label out of range");
            const double p = std::clamp(probs(y, i), kProbFloor, 1.0 - kProbFloor);
            total += -std::log(p);
        }
    }
    double loss = total / static_cast<double>(n);
    if (lambda != 0.0) {
        double sq = 0.0;
        for (auto v : regularized_views(params)) {
            for (Index i = 0; i < v.size; ++i) sq += v.data[i] * v.data[i];
        }
        loss += lambda * sq;
    }
    return loss;
}

Gradients model_backward(const ForwardCache& cache, ModelParams& params,
                         const std::vector<int>& labels) {
    require(cache.train_mode, "model_backward: forward must run in train mode");
    const ModelConfig& cfg = params.config;
    const Index b = static_cast<Index>(labels.size());
    require(cache.probs.cols() == b, "model_backward: label count mismatch");

    Gradients g = zero_gradients(params);
    const double inv_n = 1.0 / static_cast<double>(b);

    // dL/dlogits: (p - y)/N in both heads.
    Matrix dlogits = cache.probs;
    if (cfg.num_classes == 2) {
        for (Index i = 0; i < b; ++i) dlogits(0, i) -= labels[static_cast<std::size_t>(i)] == 1 ? 1.0 : 0.0;
    } else {
        for (Index i = 0; i < b; ++i) dlogits(labels[static_cast<std::size_t>(i)], i) -= 1.0;
    }
    dlogits *= inv_n;

    g.w_logits = dlogits * cache.logits_input.transpose();
    if (params.b_logits.size() > 0) g.b_logits = dlogits.rowwise().sum();

    Matrix dinput = params.w_logits.transpose() * dlogits;  // logits_input gradient

    const Index d = cfg.input_dim();
    Matrix dx0 = Matrix::Zero(d, b);
    Index at = 0;
    if (cfg.cross_branch_active()) {
        Matrix dcross_out = dinput.topRows(d);
        if (cfg.cross_layers > 0) {
            auto cg = cross::cross_backward(cache.cross, params.cross, dcross_out);
            g.cross.w = std::move(cg.w);
            g.cross.b = std::move(cg.b);
            dx0 += cg.x0;
        } else {
            dx0 += dcross_out;  // identity branch: x_{L1} = x_0
        }
        at += d;
    }
    if (cfg.deep_branch_active()) {
        Matrix ddeep_out = dinput.bottomRows(cfg.deep_sizes.back());
        auto dg = deep::deep_backward(cache.deep, params.deep, ddeep_out);
        g.deep.weight = std::move(dg.weight);
        g.deep.bias = std::move(dg.bias);
        g.deep.gamma = std::move(dg.gamma);
        g.deep.beta = std::move(dg.beta);
        dx0 += dg.input;
    }
    (void)at;

    // Embedding columns: sparse accumulation per example.
    for (Index ex = 0; ex < b; ++ex) {
        Index offset = 0;
        for (std::size_t f = 0; f < cfg.fields.size(); ++f) {
            const Index ne = cfg.fields[f].embed_dim;
            embed::embed_backward(g.embedding[f], cache.categorical[f][static_cast<std::size_t>(ex)],
                                  dx0.col(ex).segment(offset, ne));
            offset += ne;
        }
    }

    // Ridge term: d/dw lambda ||w||^2 = 2 lambda w.
    if (cfg.lambda != 0.0) {
        auto pw = regularized_views(params);
        auto gw = regularized_views(g);
        for (std::size_t i = 0; i < pw.size(); ++i) {
            for (Index j = 0; j < pw[i].size; ++j) gw[i].data[j] += 2.0 * cfg.lambda * pw[i].data[j];
        }
    }
    return g;
}

double accuracy(const Matrix& probs, const std::vector<int>& labels) {
    const Index n = static_cast<Index>(labels.size());
    if (n == 0) return 0.0;
    Index hits = 0;
    for (Index i = 0; i < n; ++i) {
        int pred;
        if (probs.rows() == 1) {
            pred = probs(0, i) >= 0.5 ? 1 : 0;
        } else {
            probs.col(i).maxCoeff(&pred);
        }
        if (pred == labels[static_cast<std::size_t>(i)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Checkpoint: "DCNC" magic, u32 version, schema header, then raw little-endian
// double blocks in checkpoint_views order.

namespace {

constexpr char kMagic[4] = {'D', 'C', 'N', 'C'};
constexpr std::uint32_t kVersion = 1;

void write_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void write_i64(std::ostream& os, std::int64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void write_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }

std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v;
    is.read(reinterpret_cast<char*>(&v), 8);
    if (!is) throw CheckpointError("checkpoint truncated");
    return v;
}
std::int64_t read_i64(std::istream& is) { return static_cast<std::int64_t>(read_u64(is)); }
double read_f64(std::istream& is) {
    double v;
    is.read(reinterpret_cast<char*>(&v), 8);
    if (!is) throw CheckpointError("checkpoint truncated");
    return v;
}

}  // namespace

void checkpoint_save(ModelParams& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("cannot open " + path + " for writing");
    os.write(kMagic, 4);
    const std::uint32_t version = kVersion;
    os.write(reinterpret_cast<const char*>(&version), 4);

    const ModelConfig& c = params.config;
    write_i64(os, c.dense_count);
    write_u64(os, c.fields.size());
    for (const auto& f : c.fields) {
        write_i64(os, f.vocab_size);
        write_i64(os, f.embed_dim);
    }
    write_i64(os, c.cross_layers);
    write_u64(os, c.deep_sizes.size());
    for (Index s : c.deep_sizes) write_i64(os, s);
    write_u64(os, c.batch_norm ? 1 : 0);
    write_i64(os, c.num_classes);
    write_u64(os, c.logits_bias ? 1 : 0);
    write_u64(os, c.concat_x0_when_no_cross ? 1 : 0);
    write_f64(os, c.lambda);

    auto views = checkpoint_views(params);
    write_u64(os, views.size());
    for (auto v : views) {
        write_u64(os, static_cast<std::uint64_t>(v.size));
        os.write(reinterpret_cast<const char*>(v.data), static_cast<std::streamsize>(v.size) * 8);
    }
    if (!os) throw CheckpointError("write failed for " + path);
}

ModelParams checkpoint_load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError("not a checkpoint file");
    std::uint32_t version;
    is.read(reinterpret_cast<char*>(&version), 4);
    if (!is) throw CheckpointError("checkpoint truncated");
    if (version != kVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));

    ModelConfig c;
    c.dense_count = read_i64(is);
    const std::uint64_t nfields = read_u64(is);
    if (nfields > 100000) throw CheckpointError("corrupt field count");
    for (std::uint64_t i = 0; i < nfields; ++i) {
        embed::FieldSpec f;
        f.vocab_size = read_i64(is);
        f.embed_dim = read_i64(is);
        c.fields.push_back(f);
    }
    c.cross_layers = read_i64(is);
    const std::uint64_t ndeep = read_u64(is);
    if (ndeep > 100000) throw CheckpointError("corrupt deep layer count");
    for (std::uint64_t i = 0; i < ndeep; ++i) c.deep_sizes.push_back(read_i64(is));
    c.batch_norm = read_u64(is) != 0;
    c.num_classes = read_i64(is);
    c.logits_bias = read_u64(is) != 0;
    c.concat_x0_when_no_cross = read_u64(is) != 0;
    c.lambda = read_f64(is);

    Rng scratch(0);
    ModelParams params = init_model(c, scratch);

    auto views = checkpoint_views(params);
    const std::uint64_t count = read_u64(is);
    if (count != views.size()) throw CheckpointError("checkpoint tensor count mismatch");
    for (auto v : views) {
        const std::uint64_t size = read_u64(is);
        if (size != static_cast<std::uint64_t>(v.size))
            throw CheckpointError("checkpoint tensor size mismatch");
        is.read(reinterpret_cast<char*>(v.data), static_cast<std::streamsize>(v.size) * 8);
        if (!is) throw CheckpointError("checkpoint truncated");
    }
    is.peek();
    if (!is.eof()) throw CheckpointError("trailing bytes in checkpoint");
    return params;
}

}  // namespace dcn::model
