#include "ckgr/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace ckgr {

std::size_t LayerStack::stitched_dim() const noexcept { return std::accumulate(dims.begin(), dims.end(), std::size_t{0}); }

LayerStack LayerStack::zeros(std::vector<std::size_t> dims, bool shared_weights) {
    if (dims.size() < 2) throw ConfigError("layer stack needs at least one layer");
    LayerStack s;
    s.dims = std::move(dims);
    for (std::size_t l = 1; l < s.dims.size(); ++l) {
        s.w1.emplace_back(s.dims[l], s.dims[l - 1]);
        if (!shared_weights) s.w2.emplace_back(s.dims[l], s.dims[l - 1]);
    }
    return s;
}

LayerStack LayerStack::gaussian(std::vector<std::size_t> dims, bool shared_weights, double stddev, Rng& rng) {
    if (dims.size() < 2) throw ConfigError("layer stack needs at least one layer");
    LayerStack s;
    s.dims = std::move(dims);
    for (std::size_t l = 1; l < s.dims.size(); ++l) {
        s.w1.push_back(gaussian_init(s.dims[l], s.dims[l - 1], stddev, rng));
        if (!shared_weights) s.w2.push_back(gaussian_init(s.dims[l], s.dims[l - 1], stddev, rng));
    }
    return s;
}

std::vector<std::size_t> resolve_layer_dims(std::size_t entity_dim, std::span<const std::size_t> layer_dims,
                                            std::size_t layers) {
    if (layers == 0) throw ConfigError("number of layers must be at least 1");
    if (layer_dims.empty()) throw ConfigError("layer dims must not be empty");
    std::vector<std::size_t> dims{entity_dim};
    for (std::size_t l = 0; l < layers; ++l) dims.push_back(layer_dims[std::min(l, layer_dims.size() - 1)]);
    for (auto d : dims) {
        if (d == 0) throw ConfigError("layer dims must be positive");
    }
    return dims;
}

namespace {

void check_form(const EmbeddingTable& table, AttentionForm form) {
    if (form == AttentionForm::Printed && table.dim() != table.relation_dim()) {
        throw ConfigError("printed attention form requires entity dim == relation dim (got d=" +
                          std::to_string(table.dim()) + ", k=" + std::to_string(table.relation_dim()) + ")");
    }
}

// Quantities shared by the attention forward and backward passes for one (h, r, t).
struct AttentionTerms {
    Vector proj_tail;  // W_r e_t
    Vector act;        // tanh(W_r e_h + e_r) or tanh(W_r e_h + e_t)
};

void attention_terms(EntityId h, RelationId r, EntityId t, const EmbeddingTable& table, AttentionForm form,
                     AttentionTerms& out) {
    const Matrix& w = table.projection[idx(r)];
    out.proj_tail.resize(w.rows());
    out.act.resize(w.rows());
    matvec(w, table.entity.row(idx(t)), out.proj_tail);
    matvec(w, table.entity.row(idx(h)), out.act);
    const auto shift = form == AttentionForm::Relation ? table.relation.row(idx(r)) : table.entity.row(idx(t));
    for (std::size_t i = 0; i < out.act.size(); ++i) out.act[i] = std::tanh(out.act[i] + shift[i]);
}

void compute_attention(const CollaborativeKG& kg, const EmbeddingTable& table, AttentionForm form,
                       std::vector<double>& logits, std::vector<double>& weights) {
    check_form(table, form);
    const auto csr = kg.csr();
    const auto offsets = kg.offsets();
    logits.assign(csr.size(), 0.0);
    weights.assign(csr.size(), 0.0);
    AttentionTerms terms;
    for (std::size_t h = 0; h < kg.entity_count(); ++h) {
        const std::size_t b = offsets[h], e = offsets[h + 1];
        if (b == e) continue;
        for (std::size_t j = b; j < e; ++j) {
            attention_terms(entity_id(h), csr[j].relation, csr[j].tail, table, form, terms);
            logits[j] = dot(terms.proj_tail, terms.act);
        }
        const Vector w = softmax(std::span<const double>(logits).subspan(b, e - b));
        std::copy(w.begin(), w.end(), weights.begin() + static_cast<std::ptrdiff_t>(b));
    }
}

}  // namespace

double attention_logit(EntityId h, RelationId r, EntityId t, const EmbeddingTable& table, AttentionForm form) {
    check_form(table, form);
    if (idx(r) >= table.relation_count()) throw IndexError("relation id " + std::to_string(idx(r)) + " out of range");
    if (idx(h) >= table.entity_count() || idx(t) >= table.entity_count()) throw IndexError("entity id out of range");
    AttentionTerms terms;
    attention_terms(h, r, t, table, form, terms);
    return dot(terms.proj_tail, terms.act);
}

Vector attention_weights(EntityId h, const CollaborativeKG& kg, const EmbeddingTable& table, AttentionForm form) {
    const auto nbrs = kg.neighbors(h);
    if (nbrs.empty()) return {};
    Vector logits;
    logits.reserve(nbrs.size());
    for (const auto& n : nbrs) logits.push_back(attention_logit(h, n.relation, n.tail, table, form));
    return softmax(logits);
}

Vector neighborhood_message(EntityId h, const CollaborativeKG& kg, const EmbeddingTable& table, AttentionForm form) {
    const auto nbrs = kg.neighbors(h);
    Vector out(table.dim(), 0.0);
    if (nbrs.empty()) return out;
    const Vector w = attention_weights(h, kg, table, form);
    for (std::size_t j = 0; j < nbrs.size(); ++j) axpy(w[j], table.entity.row(idx(nbrs[j].tail)), out);
    return out;
}

Vector neighborhood_message(EntityId h, const CollaborativeKG& kg, std::span<const double> csr_weights,
                            const Matrix& features) {
    const auto nbrs = kg.neighbors(h);
    const std::size_t b = kg.offset(h);
    Vector out(features.cols(), 0.0);
    for (std::size_t j = 0; j < nbrs.size(); ++j) axpy(csr_weights[b + j], features.row(idx(nbrs[j].tail)), out);
    return out;
}

Vector bi_interaction_aggregate(std::span<const double> e_h, std::span<const double> e_n, const Matrix& w1,
                                const Matrix* w2, double slope) {
    if (e_h.size() != e_n.size()) {
        throw ShapeError("bi_interaction_aggregate: e_h has " + std::to_string(e_h.size()) + " dims but e_N has " +
                         std::to_string(e_n.size()));
    }
    Vector sum(e_h.size()), prod(e_h.size());
    for (std::size_t i = 0; i < e_h.size(); ++i) {
        sum[i] = e_h[i] + e_n[i];
        prod[i] = e_h[i] * e_n[i];
    }
    Vector a = matvec(w1, sum);
    const Vector b = matvec(w2 ? *w2 : w1, prod);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = leaky_relu(a[i], slope) + leaky_relu(b[i], slope);
    return a;
}

std::size_t Propagation::stitched_dim() const noexcept {
    std::size_t s = 0;
    for (const auto& m : layers) s += m.cols();
    return s;
}

Vector Propagation::stitched(EntityId e) const {
    Vector out(stitched_dim());
    stitched_into(e, out);
    return out;
}

void Propagation::stitched_into(EntityId e, std::span<double> out) const {
    if (out.size() != stitched_dim()) throw ShapeError("stitched_into: output has wrong length");
    std::size_t off = 0;
    for (const auto& m : layers) {
        const auto r = m.row(idx(e));
        std::copy(r.begin(), r.end(), out.begin() + static_cast<std::ptrdiff_t>(off));
        off += r.size();
    }
}

Propagation propagate(const CollaborativeKG& kg, const EmbeddingTable& table, const LayerStack& stack,
                      const PropagationOptions& opts) {
    if (stack.layers() == 0) throw ConfigError("propagate: layer stack is empty");
    if (stack.dims.empty() || stack.dims[0] != table.dim()) throw ShapeError("propagate: layer stack d_0 != entity dim");
    if (table.entity_count() != kg.entity_count() || table.relation_count() != kg.relation_count()) {
        throw ShapeError("propagate: embedding table does not match graph vocabulary");
    }

    Propagation p;
    compute_attention(kg, table, opts.attention, p.logits, p.weights);

    const std::size_t n = kg.entity_count();
    const auto csr = kg.csr();
    const auto offsets = kg.offsets();
    p.layers.push_back(table.entity);
    for (std::size_t l = 0; l < stack.layers(); ++l) {
        const Matrix& prev = p.layers.back();
        const std::size_t din = prev.cols();
        const std::size_t dout = stack.w1[l].rows();
        Matrix msg(n, din), z1(n, dout), z2(n, dout), next(n, dout);
        Vector sum(din), prod(din);
        for (std::size_t h = 0; h < n; ++h) {
            auto m = msg.row(h);
            for (std::size_t j = offsets[h]; j < offsets[h + 1]; ++j) axpy(p.weights[j], prev.row(idx(csr[j].tail)), m);
            const auto eh = prev.row(h);
            for (std::size_t i = 0; i < din; ++i) {
                sum[i] = eh[i] + m[i];
                prod[i] = eh[i] * m[i];
            }
            matvec(stack.w1[l], sum, z1.row(h));
            matvec(stack.product_weights(l), prod, z2.row(h));
            auto out = next.row(h);
            const auto a = z1.row(h), b = z2.row(h);
            for (std::size_t i = 0; i < dout; ++i) out[i] = leaky_relu(a[i], opts.slope) + leaky_relu(b[i], opts.slope);
        }
        p.messages.push_back(std::move(msg));
        p.pre_sum.push_back(std::move(z1));
        p.pre_prod.push_back(std::move(z2));
        p.layers.push_back(std::move(next));
    }
    return p;
}

LayerGrads::LayerGrads(const LayerStack& like) {
    for (const auto& w : like.w1) w1.emplace_back(w.rows(), w.cols());
    for (const auto& w : like.w2) w2.emplace_back(w.rows(), w.cols());
}

void LayerGrads::clear() {
    for (auto& w : w1) w.fill(0.0);
    for (auto& w : w2) w.fill(0.0);
}

void backpropagate(const Propagation& fwd, const CollaborativeKG& kg, const EmbeddingTable& table,
                   const LayerStack& stack, const PropagationOptions& opts, const Matrix& d_stitched,
                   EmbeddingGrads& table_grads, LayerGrads& layer_grads) {
    const std::size_t n = kg.entity_count();
    const std::size_t nl = stack.layers();
    if (d_stitched.rows() != n || d_stitched.cols() != fwd.stitched_dim()) {
        throw ShapeError("backpropagate: gradient matrix has wrong shape");
    }
    const auto csr = kg.csr();
    const auto offsets = kg.offsets();

    // Split the stitched gradient into per-layer blocks.
    std::vector<Matrix> d_layers;
    {
        std::size_t off = 0;
        for (const auto& h : fwd.layers) {
            Matrix g(n, h.cols());
            for (std::size_t e = 0; e < n; ++e) {
                const auto src = d_stitched.row(e).subspan(off, h.cols());
                std::copy(src.begin(), src.end(), g.row(e).begin());
            }
            off += h.cols();
            d_layers.push_back(std::move(g));
        }
    }

    std::vector<double> d_weights(csr.size(), 0.0);
    for (std::size_t l = nl; l >= 1; --l) {
        const Matrix& prev = fwd.layers[l - 1];
        const Matrix& msg = fwd.messages[l - 1];
        const Matrix& z1 = fwd.pre_sum[l - 1];
        const Matrix& z2 = fwd.pre_prod[l - 1];
        const Matrix& w1 = stack.w1[l - 1];
        const Matrix& w2 = stack.product_weights(l - 1);
        Matrix& gw1 = layer_grads.w1[l - 1];
        Matrix& gw2 = stack.shared_weights() ? layer_grads.w1[l - 1] : layer_grads.w2[l - 1];
        Matrix& d_prev = d_layers[l - 1];
        const std::size_t din = prev.cols(), dout = w1.rows();

        Vector dz1(dout), dz2(dout), sum(din), prod(din), ds(din), dp(din), dm(din);
        for (std::size_t h = 0; h < n; ++h) {
            const auto g = d_layers[l].row(h);
            if (std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; })) continue;
            const auto a = z1.row(h), b = z2.row(h);
            for (std::size_t i = 0; i < dout; ++i) {
                dz1[i] = g[i] * leaky_relu_grad(a[i], opts.slope);
                dz2[i] = g[i] * leaky_relu_grad(b[i], opts.slope);
            }
            const auto eh = prev.row(h);
            const auto m = msg.row(h);
            for (std::size_t i = 0; i < din; ++i) {
                sum[i] = eh[i] + m[i];
                prod[i] = eh[i] * m[i];
            }
            add_outer(gw1, 1.0, dz1, sum);
            add_outer(gw2, 1.0, dz2, prod);
            std::fill(ds.begin(), ds.end(), 0.0);
            std::fill(dp.begin(), dp.end(), 0.0);
            matvec_t_accumulate(w1, dz1, ds);
            matvec_t_accumulate(w2, dz2, dp);
            auto dh = d_prev.row(h);
            for (std::size_t i = 0; i < din; ++i) {
                dh[i] += ds[i] + dp[i] * m[i];
                dm[i] = ds[i] + dp[i] * eh[i];
            }
            for (std::size_t j = offsets[h]; j < offsets[h + 1]; ++j) {
                const std::size_t t = idx(csr[j].tail);
                axpy(fwd.weights[j], dm, d_prev.row(t));
                d_weights[j] += dot(dm, prev.row(t));
            }
        }
    }

    // Layer-0 block flows straight into the entity table.
    for (std::size_t e = 0; e < n; ++e) {
        const auto g = d_layers[0].row(e);
        if (std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; })) continue;
        axpy(1.0, g, table_grads.grad.entity.row(e));
        table_grads.touch_entity(entity_id(e));
    }

    // Softmax and logit backward.
    AttentionTerms terms;
    Vector dq, back;
    for (std::size_t h = 0; h < n; ++h) {
        const std::size_t b = offsets[h], e = offsets[h + 1];
        if (b == e) continue;
        double inner = 0.0;
        for (std::size_t j = b; j < e; ++j) inner += fwd.weights[j] * d_weights[j];
        for (std::size_t j = b; j < e; ++j) {
            const double dlogit = fwd.weights[j] * (d_weights[j] - inner);
            if (dlogit == 0.0) continue;
            const RelationId r = csr[j].relation;
            const EntityId t = csr[j].tail;
            attention_terms(entity_id(h), r, t, table, opts.attention, terms);
            const std::size_t k = terms.act.size();
            dq.resize(k);
            for (std::size_t i = 0; i < k; ++i) dq[i] = dlogit * terms.proj_tail[i] * (1.0 - terms.act[i] * terms.act[i]);
            // d proj_tail = dlogit * act
            Matrix& gw = table_grads.grad.projection[idx(r)];
            const auto et = table.entity.row(idx(t));
            const auto eh = table.entity.row(h);
            add_outer(gw, dlogit, terms.act, et);
            add_outer(gw, 1.0, dq, eh);
            const Matrix& w = table.projection[idx(r)];
            back.assign(table.dim(), 0.0);
            matvec_t_accumulate(w, terms.act, back);
            axpy(dlogit, back, table_grads.grad.entity.row(idx(t)));
            back.assign(table.dim(), 0.0);
            matvec_t_accumulate(w, dq, back);
            axpy(1.0, back, table_grads.grad.entity.row(h));
            if (opts.attention == AttentionForm::Relation) {
                axpy(1.0, dq, table_grads.grad.relation.row(idx(r)));
            } else {
                axpy(1.0, dq, table_grads.grad.entity.row(idx(t)));
            }
            table_grads.touch_entity(entity_id(h));
            table_grads.touch_entity(t);
            table_grads.touch_relation(r);
        }
    }
}

}  // namespace ckgr
