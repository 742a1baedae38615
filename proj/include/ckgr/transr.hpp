#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ckgr/kg.hpp"
#include "ckgr/numeric.hpp"

namespace ckgr {

// Parameters of one collaborative KG: entity vectors (N x d), relation vectors (M x k)
// and one k x d projection matrix per relation.
struct EmbeddingTable {
    Matrix entity;
    Matrix relation;
    std::vector<Matrix> projection;

    std::size_t dim() const noexcept { return entity.cols(); }
    std::size_t relation_dim() const noexcept { return relation.cols(); }
    std::size_t entity_count() const noexcept { return entity.rows(); }
    std::size_t relation_count() const noexcept { return relation.rows(); }

    static EmbeddingTable zeros(std::size_t entities, std::size_t relations, std::size_t d, std::size_t k);
    static EmbeddingTable gaussian(std::size_t entities, std::size_t relations, std::size_t d, std::size_t k,
                                   double stddev, Rng& rng);

    friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;
};

// Gradient buffers shaped like an EmbeddingTable, with per-row touch flags so that
// optimizers can restrict updates to rows a batch actually reached.
struct EmbeddingGrads {
    EmbeddingTable grad;
    std::vector<std::uint8_t> entity_touched;
    std::vector<std::uint8_t> relation_touched;  // covers relation row and projection matrix

    EmbeddingGrads() = default;
    explicit EmbeddingGrads(const EmbeddingTable& like);

    void touch_entity(EntityId e) { entity_touched[idx(e)] = 1; }
    void touch_relation(RelationId r) { relation_touched[idx(r)] = 1; }
    void clear();
};

// Returns W_r e.
Vector project(std::span<const double> e, RelationId r, const EmbeddingTable& table);

// g(h,r,t) = ||W_r e_h + e_r - W_r e_t||^2; lower is more plausible.
double triple_energy(const Triple& t, const EmbeddingTable& table);

// Uniform draw among tails t' with (h,r,t') absent from the graph. Rejection sampling;
// after 4N rejections falls back to enumerating the valid tails, and throws
// SamplingExhausted when there are none.
EntityId sample_negative_tail(EntityId h, RelationId r, const CollaborativeKG& kg, Rng& rng);
EntityId sample_negative_head(RelationId r, EntityId t, const CollaborativeKG& kg, Rng& rng);

struct TripleBatch {
    std::vector<Triple> positives;
    std::vector<Triple> negatives;  // parallel to positives, one corrupted entity each
};

// One negative per positive. Tails are corrupted; with `corrupt_heads` each triple
// corrupts its head or tail with equal probability.
TripleBatch make_triple_batch(std::span<const Triple> positives, const CollaborativeKG& kg, Rng& rng,
                              bool corrupt_heads = false);

struct KgLoss {
    double loss = 0.0;
    EmbeddingGrads grads;
};

// L = sum -ln sigma(g(neg) - g(pos)) and its gradient with respect to the table.
KgLoss kg_loss(const TripleBatch& batch, const EmbeddingTable& table);

// Same loss, accumulating gradients into `grads` (scaled by `scale`). Throws NumericFault
// carrying the offending pair index when a term is non-finite.
double kg_loss_accumulate(const TripleBatch& batch, const EmbeddingTable& table, EmbeddingGrads& grads,
                          double scale = 1.0);

}  // namespace ckgr
