#include "dcn/embedding.hpp"
#include "dcn/linalg.hpp"
#include "dcn/rng.hpp"

#include "doctest.h"

using namespace dcn;
using namespace dcn::embed;

TEST_CASE("embed_dim_rule") {
    CHECK(embed_dim_rule(1) == 6);
    CHECK(embed_dim_rule(1296) == 36);   // 1296^(1/4) = 6
    CHECK(embed_dim_rule(10000) == 60);  // 10000^(1/4) = 10
    CHECK(embed_dim_rule(2) == 7);       // floor(6 * 1.189...)
    CHECK_THROWS(embed_dim_rule(0));
}

TEST_CASE("embed_lookup is a column extraction") {
    EmbeddingTable t;
    Matrix m(2, 3);
    m << 1, 2, 5, 3, 4, 6;
    t.tables.push_back(m);

    Vector c0 = embed_lookup(t, 0, 0);
    CHECK(c0[0] == 1);
    CHECK(c0[1] == 3);

    // identity table picks out the unit vector
    EmbeddingTable id;
    id.tables.push_back(Matrix::Identity(3, 3));
    Vector e2 = embed_lookup(id, 0, 2);
    CHECK(e2[2] == 1.0);
    CHECK(e2[0] == 0.0);

    // equivalent to matvec with the one-hot vector
    Vector onehot = Vector::Zero(3);
    onehot[1] = 1;
    CHECK(embed_lookup(t, 0, 1).isApprox(matvec(m, onehot)));
}

TEST_CASE("out-of-vocabulary ids route to the last column") {
    EmbeddingTable t;
    Matrix m(2, 3);
    m << 1, 2, 9, 3, 4, 9;
    t.tables.push_back(m);
    CHECK(embed_lookup(t, 0, 99).isApprox(m.col(2)));
    CHECK(embed_lookup(t, 0, -1).isApprox(m.col(2)));
}

TEST_CASE("stack concatenates embeddings then dense") {
    Vector dense(2);
    dense << 1, 2;
    CHECK(stack({}, dense).isApprox(dense));

    Vector a(1), b(1), d(1);
    a << 1;
    b << 2;
    d << 3;
    Vector s = stack({a, b}, d);
    REQUIRE(s.size() == 3);
    CHECK(s[0] == 1);
    CHECK(s[1] == 2);
    CHECK(s[2] == 3);

    Vector e(2);
    e << 0, 0;
    CHECK(stack({e}, Vector()).size() == 2);
}

TEST_CASE("embed_backward touches only the looked-up column") {
    Matrix grad = Matrix::Zero(2, 2);
    Vector slice(2);
    slice << 1, 1;
    embed_backward(grad, 0, slice);
    CHECK(grad.col(0).isApprox(slice));
    CHECK(grad.col(1).isZero());

    // two hits on the same id accumulate
    embed_backward(grad, 0, slice);
    CHECK(grad(0, 0) == 2.0);

    // zero upstream -> no change
    Matrix before = grad;
    embed_backward(grad, 1, Vector::Zero(2));
    CHECK(grad.isApprox(before));

    CHECK_THROWS_AS(embed_backward(grad, 0, Vector::Zero(3)), ShapeError);
}

TEST_CASE("initialized tables stay within the scale bound") {
    Rng rng(3);
    auto table = init_embedding({{10, 4}, {5, 2}}, rng);
    REQUIRE(table.field_count() == 2);
    CHECK(table.total_dim() == 6);
    CHECK(table.tables[0].cwiseAbs().maxCoeff() <= 0.5);  // 1/sqrt(4)
}
