#include "dcn/model.hpp"

#include "doctest.h"
#include "fd_check.hpp"

#include <cstdio>
#include <fstream>

using namespace dcn;
using namespace dcn::model;

namespace {

ModelConfig toy_config() {
    ModelConfig cfg;
    cfg.dense_count = 4;
    cfg.fields = {{5, 3}, {5, 3}};
    cfg.cross_layers = 2;
    cfg.deep_sizes = {8};
    return cfg;
}

Batch toy_batch(const ModelConfig& cfg, Rng& rng, Index b) {
    Batch batch;
    batch.dense = Matrix(cfg.dense_count, b);
    for (Index c = 0; c < b; ++c)
        for (Index r = 0; r < cfg.dense_count; ++r) batch.dense(r, c) = rng.uniform(-1, 1);
    batch.categorical.resize(cfg.fields.size());
    for (std::size_t f = 0; f < cfg.fields.size(); ++f)
        for (Index c = 0; c < b; ++c)
            batch.categorical[f].push_back(
                static_cast<Index>(rng.uniform_int(static_cast<std::uint64_t>(cfg.fields[f].vocab_size))));
    for (Index c = 0; c < b; ++c) batch.labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
    return batch;
}

}  // namespace

TEST_CASE("zero logits weight predicts one half") {
    Rng rng(1);
    ModelParams p = init_model(toy_config(), rng);
    p.w_logits.setZero();
    Batch batch = toy_batch(p.config, rng, 5);
    auto cache = model_forward(p, batch, Mode::kEval);
    for (Index i = 0; i < 5; ++i) CHECK(cache.probs(0, i) == doctest::Approx(0.5));
}

TEST_CASE("hand-evaluated single-field toy model") {
    ModelConfig cfg;
    cfg.dense_count = 1;
    cfg.fields = {{2, 1}};
    cfg.cross_layers = 1;
    cfg.deep_sizes = {};
    cfg.concat_x0_when_no_cross = false;
    Rng rng(2);
    ModelParams p = init_model(cfg, rng);
    // x0 = [e, v] with embedding e for id 0 and dense value v
    p.embedding.tables[0](0, 0) = 0.5;
    p.cross.w[0] << 1.0, 2.0;
    p.cross.b[0] << 0.1, -0.1;
    p.w_logits << 1.0, 1.0;

    Batch batch;
    batch.dense = Matrix(1, 1);
    batch.dense(0, 0) = 2.0;
    batch.categorical = {{0}};
    batch.labels = {1};
    auto cache = model_forward(p, batch, Mode::kEval);

    // x0 = [0.5, 2]; s = 0.5*1 + 2*2 = 4.5
    // x1 = x0*4.5 + b + x0 = [0.5*5.5 + 0.1, 2*5.5 - 0.1] = [2.85, 10.9]
    // logit = 2.85 + 10.9 = 13.75
    const double expect = 1.0 / (1.0 + std::exp(-13.75));
    CHECK(cache.probs(0, 0) == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("logloss values") {
    Rng rng(3);
    ModelParams p = init_model(toy_config(), rng);
    Matrix probs(1, 1);
    probs << 0.5;
    CHECK(logloss(probs, {1}, p, 0.0) == doctest::Approx(0.6931).epsilon(1e-3));

    probs << 1.0 - 1e-15;
    CHECK(logloss(probs, {1}, p, 0.0) == doctest::Approx(0.0).epsilon(1e-9));

    Matrix two(1, 2);
    two << 0.9, 0.2;
    CHECK(logloss(two, {1, 0}, p, 0.0) ==
          doctest::Approx(-(std::log(0.9) + std::log(0.8)) / 2).epsilon(1e-4));

    CHECK_THROWS(logloss(Matrix(1, 0), {}, p, 0.0));
}

TEST_CASE("loss stays finite at saturated probabilities") {
    Rng rng(31);
    ModelParams p = init_model(toy_config(), rng);
    Matrix probs(1, 2);
    probs << 0.0, 1.0;  // pre-clamp extremes
    const double l = logloss(probs, {1, 0}, p, 0.0);
    CHECK(std::isfinite(l));
}

TEST_CASE("full model gradient check") {
    ModelConfig cfg;
    cfg.dense_count = 4;
    cfg.fields = {{5, 3}, {5, 3}};
    cfg.cross_layers = 2;
    cfg.deep_sizes = {8};
    cfg.lambda = 0.01;
    Rng rng(17);
    ModelParams p = init_model(cfg, rng);
    Batch batch = toy_batch(cfg, rng, 7);

    auto loss = [&] {
        auto cache = model_forward(p, batch, Mode::kTrain);
        return logloss(cache.probs, batch.labels, p, cfg.lambda);
    };
    auto cache = model_forward(p, batch, Mode::kTrain);
    Gradients g = model_backward(cache, p, batch.labels);

    auto pv = trainable_views(p);
    auto gv = trainable_views(g);
    REQUIRE(pv.size() == gv.size());
    for (std::size_t k = 0; k < pv.size(); ++k) {
        CHECK(testing::fd_max_rel_error(loss, pv[k], gv[k], 1e-5, 1e-5) < 1e-4);
    }
}

TEST_CASE("label equal to prediction zeroes the logits gradient") {
    Rng rng(5);
    ModelConfig cfg = toy_config();
    ModelParams p = init_model(cfg, rng);
    p.w_logits.setZero();  // p = 0.5 everywhere
    Batch batch = toy_batch(cfg, rng, 4);
    batch.labels = {1, 0, 1, 0};  // mean residual 0 per matched pair
    auto cache = model_forward(p, batch, Mode::kTrain);
    Gradients g = model_backward(cache, p, batch.labels);
    // each example contributes (0.5 - y); with logits weights zero the
    // logits-input gradient is (p - y) * input, nonzero per example, but a
    // y == p case must contribute exactly zero:
    Batch one = toy_batch(cfg, rng, 1);
    one.labels = {1};
    auto c1 = model_forward(p, one, Mode::kTrain);
    c1.probs(0, 0) = 1.0;  // pretend perfect prediction
    Gradients g1 = model_backward(c1, p, one.labels);
    CHECK(g1.w_logits.isZero());
}

TEST_CASE("ridge gradient is 2 lambda w when data gradient vanishes") {
    ModelConfig cfg = toy_config();
    cfg.lambda = 0.1;
    Rng rng(6);
    ModelParams p = init_model(cfg, rng);
    Batch one = toy_batch(cfg, rng, 1);
    one.labels = {1};
    auto cache = model_forward(p, one, Mode::kTrain);
    cache.probs(0, 0) = 1.0;  // zero data gradient
    Gradients g = model_backward(cache, p, one.labels);
    for (std::size_t l = 0; l < p.cross.w.size(); ++l)
        CHECK((g.cross.w[l] - 2 * cfg.lambda * p.cross.w[l]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("binary sigmoid equals two-class softmax on equivalent logits") {
    // softmax([0, z]) assigns exp(z)/(1+exp(z)) to class 1, which must equal
    // the sigmoid head at the same logit; checked through the model's logits.
    ModelConfig cfg = toy_config();
    Rng rng(7);
    ModelParams bin = init_model(cfg, rng);
    Batch batch = toy_batch(cfg, rng, 6);
    auto cache = model_forward(bin, batch, Mode::kEval);
    for (Index i = 0; i < batch.size(); ++i) {
        const double z = cache.logits(0, i);
        Vector two(2);
        two << 0.0, z;
        const double zmax = two.maxCoeff();
        Vector e = (two.array() - zmax).exp();
        const double soft_p1 = e[1] / e.sum();
        CHECK(std::abs(soft_p1 - cache.probs(0, i)) < 1e-10);
        // losses agree for either label
        CHECK(-std::log(soft_p1) == doctest::Approx(-std::log(cache.probs(0, i))).epsilon(1e-10));
    }
}

TEST_CASE("multiclass probabilities sum to one") {
    ModelConfig cfg = toy_config();
    cfg.num_classes = 7;
    Rng rng(8);
    ModelParams p = init_model(cfg, rng);
    Batch batch = toy_batch(cfg, rng, 5);
    batch.labels = {0, 3, 6, 2, 1};
    auto cache = model_forward(p, batch, Mode::kEval);
    for (Index i = 0; i < 5; ++i)
        CHECK(cache.probs.col(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("multiclass gradient check") {
    ModelConfig cfg;
    cfg.dense_count = 5;
    cfg.cross_layers = 1;
    cfg.deep_sizes = {6};
    cfg.num_classes = 3;
    Rng rng(9);
    ModelParams p = init_model(cfg, rng);
    Batch batch;
    batch.dense = Matrix(5, 4);
    for (Index c = 0; c < 4; ++c)
        for (Index r = 0; r < 5; ++r) batch.dense(r, c) = rng.uniform(-1, 1);
    batch.labels = {0, 2, 1, 2};
    batch.categorical = {};

    auto loss = [&] {
        auto cache = model_forward(p, batch, Mode::kTrain);
        return logloss(cache.probs, batch.labels, p, 0.0);
    };
    auto cache = model_forward(p, batch, Mode::kTrain);
    Gradients g = model_backward(cache, p, batch.labels);
    auto pv = trainable_views(p);
    auto gv = trainable_views(g);
    for (std::size_t k = 0; k < pv.size(); ++k)
        CHECK(testing::fd_max_rel_error(loss, pv[k], gv[k], 1e-5, 1e-5) < 1e-4);
}

TEST_CASE("cross-free baseline identity") {
    // L_c = 0 with the x0-concat flag and zero weights on the x0 block equals
    // the deep-only default.
    ModelConfig deep_only;
    deep_only.dense_count = 4;
    deep_only.cross_layers = 0;
    deep_only.deep_sizes = {6};
    Rng rng(10);
    ModelParams a = init_model(deep_only, rng);

    ModelConfig concat = deep_only;
    concat.concat_x0_when_no_cross = true;
    Rng rng2(11);
    ModelParams b = init_model(concat, rng2);
    b.deep = a.deep;
    b.w_logits.setZero();
    b.w_logits.rightCols(6) = a.w_logits;

    Batch batch;
    batch.dense = Matrix(4, 3);
    for (Index c = 0; c < 3; ++c)
        for (Index r = 0; r < 4; ++r) batch.dense(r, c) = rng.uniform(-1, 1);
    batch.labels = {1, 0, 1};
    batch.categorical = {};

    auto ca = model_forward(a, batch, Mode::kEval);
    auto cb2 = model_forward(b, batch, Mode::kEval);
    CHECK((ca.probs - cb2.probs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("checkpoint round trip is bit identical") {
    ModelConfig cfg = toy_config();
    cfg.batch_norm = true;
    Rng rng(12);
    ModelParams p = init_model(cfg, rng);
    const std::string path = "test_checkpoint.bin";
    checkpoint_save(p, path);
    ModelParams q = checkpoint_load(path);

    auto pv = checkpoint_views(p);
    auto qv = checkpoint_views(q);
    REQUIRE(pv.size() == qv.size());
    for (std::size_t k = 0; k < pv.size(); ++k) {
        REQUIRE(pv[k].size == qv[k].size);
        for (Index i = 0; i < pv[k].size; ++i) CHECK(pv[k].data[i] == qv[k].data[i]);
    }
    std::remove(path.c_str());
}

TEST_CASE("checkpoint rejects truncation and future versions") {
    ModelConfig cfg = toy_config();
    Rng rng(13);
    ModelParams p = init_model(cfg, rng);
    const std::string path = "test_checkpoint2.bin";
    checkpoint_save(p, path);

    // truncate
    {
        std::ifstream is(path, std::ios::binary);
        std::string all((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        std::ofstream os(path, std::ios::binary);
        os.write(all.data(), static_cast<std::streamsize>(all.size() / 2));
    }
    CHECK_THROWS_AS(checkpoint_load(path), CheckpointError);

    // future version
    checkpoint_save(p, path);
    {
        std::fstream fs(path, std::ios::binary | std::ios::in | std::ios::out);
        fs.seekp(4);
        const std::uint32_t v = 99;
        fs.write(reinterpret_cast<const char*>(&v), 4);
    }
    CHECK_THROWS_AS(checkpoint_load(path), CheckpointError);
    std::remove(path.c_str());
}

TEST_CASE("param_count matches checkpoint tensor tally") {
    ModelConfig cfg = toy_config();
    Rng rng(14);
    ModelParams p = init_model(cfg, rng);
    Index trainable = 0;
    for (auto v : trainable_views(p)) trainable += v.size;
    CHECK(param_count(p) == trainable);

    // expected: embeddings 2*(3*5) + cross 2*2*10 + deep (8*10+8) + logits 18
    const Index d = cfg.input_dim();
    CHECK(d == 10);
    CHECK(param_count(p) == 30 + cross::cross_param_count(d, 2) + (8 * 10 + 8) + 18);
}
