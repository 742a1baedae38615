#include "ckgr/transr.hpp"

#include <cmath>
#include <string>

namespace ckgr {

EmbeddingTable EmbeddingTable::zeros(std::size_t entities, std::size_t relations, std::size_t d, std::size_t k) {
    EmbeddingTable t;
    t.entity = Matrix(entities, d);
    t.relation = Matrix(relations, k);
    t.projection.assign(relations, Matrix(k, d));
    return t;
}

EmbeddingTable EmbeddingTable::gaussian(std::size_t entities, std::size_t relations, std::size_t d, std::size_t k,
                                        double stddev, Rng& rng) {
    EmbeddingTable t;
    t.entity = gaussian_init(entities, d, stddev, rng);
    t.relation = gaussian_init(relations, k, stddev, rng);
    t.projection.reserve(relations);
    for (std::size_t r = 0; r < relations; ++r) t.projection.push_back(gaussian_init(k, d, stddev, rng));
    return t;
}

EmbeddingGrads::EmbeddingGrads(const EmbeddingTable& like)
    : grad(EmbeddingTable::zeros(like.entity_count(), like.relation_count(), like.dim(), like.relation_dim())),
      entity_touched(like.entity_count(), 0),
      relation_touched(like.relation_count(), 0) {}

void EmbeddingGrads::clear() {
    grad.entity.fill(0.0);
    grad.relation.fill(0.0);
    for (auto& p : grad.projection) p.fill(0.0);
    std::fill(entity_touched.begin(), entity_touched.end(), 0);
    std::fill(relation_touched.begin(), relation_touched.end(), 0);
}

namespace {

const Matrix& projection_of(RelationId r, const EmbeddingTable& table) {
    if (idx(r) >= table.relation_count()) {
        throw IndexError("relation id " + std::to_string(idx(r)) + " out of range (" +
                         std::to_string(table.relation_count()) + " relations)");
    }
    return table.projection[idx(r)];
}

void check_entity(EntityId e, const EmbeddingTable& table) {
    if (idx(e) >= table.entity_count()) {
        throw IndexError("entity id " + std::to_string(idx(e)) + " out of range (" + std::to_string(table.entity_count()) +
                         " entities)");
    }
}

// residual = W_r (e_h - e_t) + e_r and the head-tail difference it was built from.
void energy_residual(const Triple& t, const EmbeddingTable& table, Vector& diff, Vector& residual) {
    const Matrix& w = projection_of(t.relation, table);
    check_entity(t.head, table);
    check_entity(t.tail, table);
    const auto eh = table.entity.row(idx(t.head));
    const auto et = table.entity.row(idx(t.tail));
    diff.resize(eh.size());
    for (std::size_t i = 0; i < eh.size(); ++i) diff[i] = eh[i] - et[i];
    residual.resize(w.rows());
    matvec(w, diff, residual);
    axpy(1.0, table.relation.row(idx(t.relation)), residual);
}

// Adds scale * dg/dtheta for g = ||residual||^2.
void accumulate_energy_grad(const Triple& t, const EmbeddingTable& table, const Vector& diff, const Vector& residual,
                            double scale, EmbeddingGrads& grads) {
    const Matrix& w = table.projection[idx(t.relation)];
    Vector back(diff.size(), 0.0);
    matvec_t_accumulate(w, residual, back);  // W_r^T residual
    axpy(2.0 * scale, back, grads.grad.entity.row(idx(t.head)));
    axpy(-2.0 * scale, back, grads.grad.entity.row(idx(t.tail)));
    axpy(2.0 * scale, residual, grads.grad.relation.row(idx(t.relation)));
    add_outer(grads.grad.projection[idx(t.relation)], 2.0 * scale, residual, diff);
    grads.touch_entity(t.head);
    grads.touch_entity(t.tail);
    grads.touch_relation(t.relation);
}

}  // namespace

Vector project(std::span<const double> e, RelationId r, const EmbeddingTable& table) {
    return matvec(projection_of(r, table), e);
}

double triple_energy(const Triple& t, const EmbeddingTable& table) {
    Vector diff, residual;
    energy_residual(t, table, diff, residual);
    return squared_norm(residual);
}

EntityId sample_negative_tail(EntityId h, RelationId r, const CollaborativeKG& kg, Rng& rng) {
    const std::size_t n = kg.entity_count();
    if (n == 0) throw SamplingExhausted("negative sampling on an empty graph");
    for (std::size_t attempt = 0; attempt < 4 * n; ++attempt) {
        const auto t = entity_id(rng.below(n));
        if (!kg.contains(h, r, t)) return t;
    }
    std::vector<EntityId> valid;
    for (std::size_t t = 0; t < n; ++t) {
        if (!kg.contains(h, r, entity_id(t))) valid.push_back(entity_id(t));
    }
    if (valid.empty()) {
        throw SamplingExhausted("no negative tail exists for head " + std::to_string(idx(h)) + " under relation " +
                                std::to_string(idx(r)));
    }
    return valid[rng.below(valid.size())];
}

EntityId sample_negative_head(RelationId r, EntityId t, const CollaborativeKG& kg, Rng& rng) {
    const std::size_t n = kg.entity_count();
    if (n == 0) throw SamplingExhausted("negative sampling on an empty graph");
    for (std::size_t attempt = 0; attempt < 4 * n; ++attempt) {
        const auto h = entity_id(rng.below(n));
        if (!kg.contains(h, r, t)) return h;
    }
    std::vector<EntityId> valid;
    for (std::size_t h = 0; h < n; ++h) {
        if (!kg.contains(entity_id(h), r, t)) valid.push_back(entity_id(h));
    }
    if (valid.empty()) {
        throw SamplingExhausted("no negative head exists for tail " + std::to_string(idx(t)) + " under relation " +
                                std::to_string(idx(r)));
    }
    return valid[rng.below(valid.size())];
}

TripleBatch make_triple_batch(std::span<const Triple> positives, const CollaborativeKG& kg, Rng& rng,
                              bool corrupt_heads) {
    TripleBatch batch;
    batch.positives.assign(positives.begin(), positives.end());
    batch.negatives.reserve(positives.size());
    for (const auto& p : positives) {
        if (corrupt_heads && rng.below(2) == 0) {
            batch.negatives.push_back({sample_negative_head(p.relation, p.tail, kg, rng), p.relation, p.tail});
        } else {
            batch.negatives.push_back({p.head, p.relation, sample_negative_tail(p.head, p.relation, kg, rng)});
        }
    }
    return batch;
}

double kg_loss_accumulate(const TripleBatch& batch, const EmbeddingTable& table, EmbeddingGrads& grads, double scale) {
    if (batch.positives.size() != batch.negatives.size()) {
        throw ShapeError("kg_loss: " + std::to_string(batch.positives.size()) + " positives but " +
                         std::to_string(batch.negatives.size()) + " negatives");
    }
    double total = 0.0;
    Vector diff_p, res_p, diff_n, res_n;
    for (std::size_t i = 0; i < batch.positives.size(); ++i) {
        const Triple& pos = batch.positives[i];
        const Triple& neg = batch.negatives[i];
        energy_residual(pos, table, diff_p, res_p);
        energy_residual(neg, table, diff_n, res_n);
        const double g_pos = squared_norm(res_p);
        const double g_neg = squared_norm(res_n);
        const double term = neg_log_sigmoid(g_neg - g_pos);
        if (!std::isfinite(term)) {
            throw NumericFault("kg_loss: non-finite loss at triple " + std::to_string(i), i);
        }
        total += term;
        // d/dg_pos = sigma(g_pos - g_neg), d/dg_neg = -sigma(g_pos - g_neg)
        const double s = sigmoid(g_pos - g_neg) * scale;
        accumulate_energy_grad(pos, table, diff_p, res_p, s, grads);
        accumulate_energy_grad(neg, table, diff_n, res_n, -s, grads);
    }
    return total;
}

KgLoss kg_loss(const TripleBatch& batch, const EmbeddingTable& table) {
    KgLoss out{0.0, EmbeddingGrads(table)};
    out.loss = kg_loss_accumulate(batch, table, out.grads);
    return out;
}

}  // namespace ckgr
