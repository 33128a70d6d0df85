#include "dcn/deep.hpp"
#include "dcn/linalg.hpp"
#include "dcn/rng.hpp"

#include "doctest.h"
#include "fd_check.hpp"

using namespace dcn;
using namespace dcn::deep;

TEST_CASE("deep_layer_forward") {
    Vector h(2);
    h << 1, -1;
    Vector r = deep_layer_forward(Matrix::Identity(2, 2), Vector::Zero(2), h);
    CHECK(r[0] == 1.0);
    CHECK(r[1] == 0.0);

    Matrix w(1, 2);
    w << 1, 1;
    Vector b(1);
    b << -3;
    Vector ones = Vector::Ones(2);
    CHECK(deep_layer_forward(w, b, ones)[0] == 0.0);  // pre-activation -1

    Vector b2(1);
    b2 << 2;
    CHECK(deep_layer_forward(w, b2, Vector::Zero(2))[0] == 2.0);

    CHECK_THROWS_AS(deep_layer_forward(w, b, Vector::Zero(3)), ShapeError);
}

TEST_CASE("relu idempotence through an identity layer") {
    Rng rng(2);
    Vector h(5);
    for (Index i = 0; i < 5; ++i) h[i] = rng.uniform(-3, 3);
    Vector once = deep_layer_forward(Matrix::Identity(5, 5), Vector::Zero(5), h);
    Vector twice = deep_layer_forward(Matrix::Identity(5, 5), Vector::Zero(5), once);
    CHECK(once.isApprox(twice));
}

TEST_CASE("deep_forward structure") {
    Rng rng(4);
    Vector x(3);
    x << 1, -2, 0.5;

    DeepParams empty;
    auto acts = deep_forward(empty, x, Mode::kEval);
    CHECK(acts.output().col(0).isApprox(x));

    DeepParams id;
    id.layers.push_back({Matrix::Identity(3, 3), Vector::Zero(3)});
    CHECK(deep_forward(id, x, Mode::kEval).output().col(0).isApprox(
        (x.array().max(0.0)).matrix()));

    // random 2-layer net vs hand evaluation
    DeepParams p = init_deep(3, {4, 2}, false, rng);
    auto a = deep_forward(p, x, Mode::kEval);
    Vector h1 = ((p.layers[0].weight * x + p.layers[0].bias).array().max(0.0)).matrix();
    Vector h2 = ((p.layers[1].weight * h1 + p.layers[1].bias).array().max(0.0)).matrix();
    CHECK(a.output().col(0).isApprox(h2));
}

TEST_CASE("batch norm normalizes pre-gamma-beta in train mode") {
    Rng rng(8);
    DeepParams p = init_deep(4, {5}, true, rng);
    Matrix x(4, 16);
    for (Index c = 0; c < x.cols(); ++c)
        for (Index r = 0; r < x.rows(); ++r) x(r, c) = rng.uniform(-2, 2);
    auto acts = deep_forward(p, x, Mode::kTrain);
    const Matrix& zhat = acts.zhat[0];
    Vector mean = zhat.rowwise().mean();
    Vector var = (zhat.colwise() - mean).array().square().rowwise().mean();
    CHECK(mean.cwiseAbs().maxCoeff() < 1e-8);
    // unit variance up to the epsilon regularizer
    CHECK((var.array() - 1.0).abs().maxCoeff() < 1e-3);
}

TEST_CASE("batch norm running stats feed eval mode") {
    Rng rng(9);
    DeepParams p = init_deep(2, {3}, true, rng);
    p.bn[0].momentum = 0.0;  // running stats follow the last batch exactly
    Matrix x(2, 8);
    for (Index c = 0; c < x.cols(); ++c)
        for (Index r = 0; r < x.rows(); ++r) x(r, c) = rng.uniform(-2, 2);
    auto train_acts = deep_forward(p, x, Mode::kTrain);
    auto eval_acts = deep_forward(p, x, Mode::kEval);
    CHECK((train_acts.output() - eval_acts.output()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("deep gradients match finite differences") {
    Rng rng(77);
    const Index d = 8;
    DeepParams p = init_deep(d, {16, 16}, false, rng);
    Matrix x(d, 3);
    for (Index c = 0; c < 3; ++c)
        for (Index r = 0; r < d; ++r) x(r, c) = rng.uniform(-1, 1);
    Matrix readout(16, 3);
    for (Index c = 0; c < 3; ++c)
        for (Index r = 0; r < 16; ++r) readout(r, c) = rng.uniform(-1, 1);

    auto loss = [&] {
        auto acts = deep_forward(p, x, Mode::kTrain);
        return (acts.output().array() * readout.array()).sum();
    };
    auto acts = deep_forward(p, x, Mode::kTrain);
    auto g = deep_backward(acts, p, readout);

    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        CHECK(testing::fd_max_rel_error(loss, {p.layers[l].weight.data(), p.layers[l].weight.size()},
                                        {g.weight[l].data(), g.weight[l].size()}) < 1e-6);
        CHECK(testing::fd_max_rel_error(loss, {p.layers[l].bias.data(), p.layers[l].bias.size()},
                                        {g.bias[l].data(), g.bias[l].size()}) < 1e-6);
    }
    CHECK(testing::fd_max_rel_error(loss, {x.data(), x.size()}, {g.input.data(), g.input.size()}) <
          1e-6);
}

TEST_CASE("batch norm gradients match finite differences") {
    Rng rng(78);
    const Index d = 5;
    DeepParams p = init_deep(d, {6}, true, rng);
    // freeze running stats so repeated forwards in the FD loop see identical math
    p.bn[0].momentum = 1.0;
    Matrix x(d, 7);
    for (Index c = 0; c < 7; ++c)
        for (Index r = 0; r < d; ++r) x(r, c) = rng.uniform(-1, 1);
    Matrix readout(6, 7);
    for (Index c = 0; c < 7; ++c)
        for (Index r = 0; r < 6; ++r) readout(r, c) = rng.uniform(-1, 1);

    auto loss = [&] {
        auto acts = deep_forward(p, x, Mode::kTrain);
        return (acts.output().array() * readout.array()).sum();
    };
    auto acts = deep_forward(p, x, Mode::kTrain);
    auto g = deep_backward(acts, p, readout);

    CHECK(testing::fd_max_rel_error(loss, {p.layers[0].weight.data(), p.layers[0].weight.size()},
                                    {g.weight[0].data(), g.weight[0].size()}, 1e-5) < 1e-5);
    CHECK(testing::fd_max_rel_error(loss, {p.bn[0].gamma.data(), 6}, {g.gamma[0].data(), 6}) < 1e-5);
    CHECK(testing::fd_max_rel_error(loss, {p.bn[0].beta.data(), 6}, {g.beta[0].data(), 6}) < 1e-5);
    CHECK(testing::fd_max_rel_error(loss, {x.data(), x.size()}, {g.input.data(), g.input.size()}) <
          1e-5);
}

TEST_CASE("dead relu layer yields zero weight gradient") {
    DeepParams p;
    p.layers.push_back({Matrix::Identity(2, 2), Vector::Constant(2, -100.0)});
    Matrix x = Matrix::Ones(2, 3);
    auto acts = deep_forward(p, x, Mode::kTrain);
    auto g = deep_backward(acts, p, Matrix::Ones(2, 3));
    CHECK(g.weight[0].isZero());
    CHECK(g.bias[0].isZero());
}

TEST_CASE("deep_param_count") {
    CHECK(deep_param_count(1026, 1024, 2) == 2101248);
    CHECK(deep_param_count(1, 1, 1) == 2);
    CHECK(deep_param_count(5, 3, 1) == 18);
    CHECK(deep_param_count(10, 7, 0) == 0);
}
