#pragma once

#include "dcn/linalg.hpp"
#include "dcn/rng.hpp"

#include <cstdint>
#include <vector>

namespace dcn::embed {

// One categorical field. vocab_size already includes the reserved OOV slot
// (last column); embed_dim is the embedding vector length n_e.
struct FieldSpec {
    Index vocab_size = 0;
    Index embed_dim = 0;
};

// 6 * cardinality^(1/4), floored, at least 1.
Index embed_dim_rule(std::uint64_t cardinality);

struct EmbeddingTable {
    std::vector<Matrix> tables;  // n_e x n_v per field

    Index field_count() const { return static_cast<Index>(tables.size()); }
    Index total_dim() const;
};

EmbeddingTable init_embedding(const std::vector<FieldSpec>& fields, Rng& rng);

// Column `category_id` of the field's table; ids at or past the vocabulary
// end are routed to the OOV column.
Vector embed_lookup(const EmbeddingTable& table, Index field, Index category_id);

// Concatenate embeddings (field order) followed by dense features.
Vector stack(const std::vector<Vector>& embeddings, const Vector& dense);

// Accumulate the upstream slice into a single table column; everything else
// is untouched. Serialized by the trainer (single writer).
void embed_backward(Matrix& table_grad, Index category_id, const Vector& grad_slice);

}  // namespace dcn::embed
