#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ckgr/kg.hpp"
#include "ckgr/numeric.hpp"
#include "ckgr/transr.hpp"

namespace ckgr {

// Per-layer aggregator weights. dims holds d_0..d_L; layer l maps d_{l-1} -> d_l.
// When w2 is empty the additive and product terms share w1.
struct LayerStack {
    std::vector<std::size_t> dims;
    std::vector<Matrix> w1;
    std::vector<Matrix> w2;

    std::size_t layers() const noexcept { return w1.size(); }
    bool shared_weights() const noexcept { return w2.empty(); }
    std::size_t stitched_dim() const noexcept;
    const Matrix& product_weights(std::size_t layer) const { return w2.empty() ? w1[layer] : w2[layer]; }

    static LayerStack zeros(std::vector<std::size_t> dims, bool shared_weights);
    static LayerStack gaussian(std::vector<std::size_t> dims, bool shared_weights, double stddev, Rng& rng);

    friend bool operator==(const LayerStack&, const LayerStack&) = default;
};

// Extends (repeating the last entry) or truncates per-layer dims to `layers` entries and
// prepends the entity dimension: returns d_0..d_L.
std::vector<std::size_t> resolve_layer_dims(std::size_t entity_dim, std::span<const std::size_t> layer_dims,
                                            std::size_t layers);

enum class AttentionForm {
    Relation,  // (W_r e_t)^T tanh(W_r e_h + e_r)
    Printed,   // (W_r e_t)^T tanh(W_r e_h + e_t); requires k == d
};

struct PropagationOptions {
    double slope = 0.2;
    AttentionForm attention = AttentionForm::Relation;
};

double attention_logit(EntityId h, RelationId r, EntityId t, const EmbeddingTable& table,
                       AttentionForm form = AttentionForm::Relation);

// Softmax of the logits over N_h, in neighbor order. Empty when h has no neighbors.
Vector attention_weights(EntityId h, const CollaborativeKG& kg, const EmbeddingTable& table,
                         AttentionForm form = AttentionForm::Relation);

// sum over N_h of pi(h,r,t) e_t using the table's entity vectors; zero vector when N_h is empty.
Vector neighborhood_message(EntityId h, const CollaborativeKG& kg, const EmbeddingTable& table,
                            AttentionForm form = AttentionForm::Relation);

// Same, with explicit per-slot weights (CSR order) over an arbitrary feature matrix.
Vector neighborhood_message(EntityId h, const CollaborativeKG& kg, std::span<const double> csr_weights,
                            const Matrix& features);

// LeakyReLU(W1 (e_h + e_N)) + LeakyReLU(W2 (e_h * e_N)); pass w2 == nullptr to share W1.
Vector bi_interaction_aggregate(std::span<const double> e_h, std::span<const double> e_n, const Matrix& w1,
                                const Matrix* w2, double slope);

// Forward pass over every entity. Attention weights are computed from the layer-0
// embeddings once and applied at every layer; layers update synchronously.
struct Propagation {
    std::vector<double> logits;   // per CSR slot
    std::vector<double> weights;  // per CSR slot
    std::vector<Matrix> layers;   // H_0 .. H_L
    std::vector<Matrix> messages; // layer l (1-based) stores its neighborhood messages at [l-1]
    std::vector<Matrix> pre_sum;  // W1 (h + m)
    std::vector<Matrix> pre_prod; // W2 (h * m)

    std::size_t stitched_dim() const noexcept;
    // Concatenation [H_0[e]; H_1[e]; ...; H_L[e]].
    Vector stitched(EntityId e) const;
    void stitched_into(EntityId e, std::span<double> out) const;
};

Propagation propagate(const CollaborativeKG& kg, const EmbeddingTable& table, const LayerStack& stack,
                      const PropagationOptions& opts = {});

struct LayerGrads {
    std::vector<Matrix> w1;
    std::vector<Matrix> w2;

    LayerGrads() = default;
    explicit LayerGrads(const LayerStack& like);
    void clear();
};

// Reverse-mode pass. `d_stitched` is N x stitched_dim and holds dLoss/d(stitched row);
// gradients are accumulated into `table_grads` and `layer_grads`.
void backpropagate(const Propagation& fwd, const CollaborativeKG& kg, const EmbeddingTable& table,
                   const LayerStack& stack, const PropagationOptions& opts, const Matrix& d_stitched,
                   EmbeddingGrads& table_grads, LayerGrads& layer_grads);

}  // namespace ckgr
