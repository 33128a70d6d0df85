#include "dcn/embedding.hpp"

#include <cmath>
#include <stdexcept>

namespace dcn::embed {

Index embed_dim_rule(std::uint64_t cardinality) {
    if (cardinality == 0) throw std::invalid_argument("embed_dim_rule: cardinality must be >= 1");
    const double dim = 6.0 * std::pow(static_cast<double>(cardinality), 0.25);
    // Nudge against 6 * c^(1/4) landing just below an exact integer.
    const auto floored = static_cast<Index>(std::floor(dim + 1e-9));
    return std::max<Index>(1, floored);
}

Index EmbeddingTable::total_dim() const {
    Index d = 0;
    for (const auto& t : tables) d += t.rows();
    return d;
}

EmbeddingTable init_embedding(const std::vector<FieldSpec>& fields, Rng& rng) {
    EmbeddingTable table;
    for (const auto& f : fields) {
        require(f.vocab_size >= 1 && f.embed_dim >= 1, "init_embedding: bad field spec");
        const double bound = 1.0 / std::sqrt(static_cast<double>(f.embed_dim));
        Matrix m(f.embed_dim, f.vocab_size);
        for (Index c = 0; c < m.cols(); ++c)
            for (Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-bound, bound);
        table.tables.push_back(std::move(m));
    }
    return table;
}

Vector embed_lookup(const EmbeddingTable& table, Index field, Index category_id) {
    require(field >= 0 && field < table.field_count(), "embed_lookup: no such field");
    const Matrix& m = table.tables[static_cast<std::size_t>(field)];
    if (category_id < 0 || category_id >= m.cols()) category_id = m.cols() - 1;  // OOV slot
    return m.col(category_id);
}

Vector stack(const std::vector<Vector>& embeddings, const Vector& dense) {
    Index total = dense.size();
    for (const auto& e : embeddings) total += e.size();
    Vector out(total);
    Index at = 0;
    for (const auto& e : embeddings) {
        out.segment(at, e.size()) = e;
        at += e.size();
    }
    out.segment(at, dense.size()) = dense;
    return out;
}

void embed_backward(Matrix& table_grad, Index category_id, const Vector& grad_slice) {
    require(grad_slice.size() == table_grad.rows(), "embed_backward: slice length mismatch");
    if (category_id < 0 || category_id >= table_grad.cols()) category_id = table_grad.cols() - 1;
    table_grad.col(category_id) += grad_slice;
}

}  // namespace dcn::embed
