#include "ckgr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

namespace ckgr {

ModelState init_model(const Hyperparameters& hp, const PreparedDataset& data) {
    if (hp.entity_dim == 0 || hp.relation_dim == 0) throw ConfigError("embedding dims must be positive");
    if (hp.lambda < 0.0) throw ConfigError("lambda must be non-negative");
    if (hp.attention == AttentionForm::Printed && hp.entity_dim != hp.relation_dim) {
        throw ConfigError("printed attention form requires model.d == model.k");
    }
    ModelState s;
    s.hp = hp;
    Rng rng(hp.seed, 1);
    const auto dims = hp.dims();
    const auto& kg_u = data.user_side.kg;
    const auto& kg_i = data.item_side.kg;
    s.user_side.table = EmbeddingTable::gaussian(kg_u.entity_count(), kg_u.relation_count(), hp.entity_dim,
                                                 hp.relation_dim, hp.init_std, rng);
    s.user_side.stack = LayerStack::gaussian(dims, hp.shared_weights, hp.init_std, rng);
    s.item_side.table = EmbeddingTable::gaussian(kg_i.entity_count(), kg_i.relation_count(), hp.entity_dim,
                                                 hp.relation_dim, hp.init_std, rng);
    s.item_side.stack = LayerStack::gaussian(dims, hp.shared_weights, hp.init_std, rng);
    s.align_u = data.user_side.alignment;
    s.align_i = data.item_side.alignment;
    s.user_names.assign(data.train_graph.users.names().begin(), data.train_graph.users.names().end());
    s.item_names.assign(data.train_graph.items.names().begin(), data.train_graph.items.names().end());
    return s;
}

std::size_t parameter_count(const ModelState& s) {
    std::size_t n = 0;
    auto count = [&](std::span<const double> b) { n += b.size(); };
    for_each_block(s.user_side, count);
    for_each_block(s.item_side, count);
    return n;
}

std::vector<double> flatten_parameters(const ModelState& s) {
    std::vector<double> out;
    out.reserve(parameter_count(s));
    auto append = [&](std::span<const double> b) { out.insert(out.end(), b.begin(), b.end()); };
    for_each_block(s.user_side, append);
    for_each_block(s.item_side, append);
    return out;
}

void assign_parameters(ModelState& s, std::span<const double> flat) {
    if (flat.size() != parameter_count(s)) throw ShapeError("assign_parameters: wrong parameter count");
    std::size_t off = 0;
    auto take = [&](std::span<double> b) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), b.size(), b.begin());
        off += b.size();
    };
    for_each_block(s.user_side, take);
    for_each_block(s.item_side, take);
}

namespace {

EntityId entity_of(NodeSide side, std::uint32_t id, const AlignmentMap& a) {
    return side == NodeSide::User ? a.user(id) : a.item(id);
}

// Copies one side's stitched rows into [0, S) or [S, 2S) of `out`.
void fill_half(const Propagation& prop, EntityId e, std::span<double> out) {
    if (e == kNoEntity) {
        std::fill(out.begin(), out.end(), 0.0);
    } else {
        prop.stitched_into(e, out);
    }
}

}  // namespace

Vector final_representation(NodeSide side, std::uint32_t id, const ModelState& state, const Propagation& prop_u,
                            const Propagation& prop_i, ColdPolicy policy) {
    const EntityId eu = entity_of(side, id, state.align_u);
    const EntityId ei = entity_of(side, id, state.align_i);
    if (policy == ColdPolicy::Throw && (eu == kNoEntity || ei == kNoEntity)) {
        throw ColdEntityError(std::string(side == NodeSide::User ? "user " : "item ") + std::to_string(id) +
                              " is missing from the " + (eu == kNoEntity ? "user-side" : "item-side") + " graph");
    }
    const std::size_t su = prop_u.stitched_dim(), si = prop_i.stitched_dim();
    Vector out(su + si);
    fill_half(prop_u, eu, std::span<double>(out).first(su));
    fill_half(prop_i, ei, std::span<double>(out).subspan(su));
    return out;
}

namespace {

Representations representations_from(const ModelState& state, const Propagation& pu, const Propagation& pi) {
    const std::size_t su = pu.stitched_dim(), si = pi.stitched_dim();
    Representations r{Matrix(state.user_count(), su + si), Matrix(state.item_count(), su + si)};
    for (UserIndex u = 0; u < state.user_count(); ++u) {
        auto row = r.users.row(u);
        fill_half(pu, state.align_u.user(u), row.first(su));
        fill_half(pi, state.align_i.user(u), row.subspan(su));
    }
    for (ItemIndex i = 0; i < state.item_count(); ++i) {
        auto row = r.items.row(i);
        fill_half(pu, state.align_u.item(i), row.first(su));
        fill_half(pi, state.align_i.item(i), row.subspan(su));
    }
    return r;
}

}  // namespace

Representations compute_representations(const ModelState& state, const CollaborativeKG& kg_u,
                                        const CollaborativeKG& kg_i) {
    const auto opts = state.hp.propagation();
    const Propagation pu = propagate(kg_u, state.user_side.table, state.user_side.stack, opts);
    const Propagation pi = propagate(kg_i, state.item_side.table, state.item_side.stack, opts);
    return representations_from(state, pu, pi);
}

double predict_score(const Representations& reps, UserIndex u, ItemIndex i) {
    if (u >= reps.users.rows() || i >= reps.items.rows()) throw IndexError("predict_score: id out of range");
    return dot(reps.users.row(u), reps.items.row(i));
}

void ModelRanker::score(UserIndex user, std::span<double> out) const {
    matvec(reps_->items, reps_->users.row(user), out);
}

ModelGrads::ModelGrads(const ModelState& like)
    : table_u(like.user_side.table),
      table_i(like.item_side.table),
      layers_u(like.user_side.stack),
      layers_i(like.item_side.stack) {}

void ModelGrads::clear() {
    table_u.clear();
    table_i.clear();
    layers_u.clear();
    layers_i.clear();
    layers_touched = false;
}

namespace {

template <typename Fn>
void for_each_grad_block(const EmbeddingGrads& t, const LayerGrads& l, Fn&& fn) {
    fn(t.grad.entity.values());
    fn(t.grad.relation.values());
    for (const auto& w : t.grad.projection) fn(w.values());
    for (std::size_t i = 0; i < l.w1.size(); ++i) {
        fn(l.w1[i].values());
        if (!l.w2.empty()) fn(l.w2[i].values());
    }
}

}  // namespace

std::vector<double> ModelGrads::flatten() const {
    std::vector<double> out;
    auto append = [&](std::span<const double> b) { out.insert(out.end(), b.begin(), b.end()); };
    for_each_grad_block(table_u, layers_u, append);
    for_each_grad_block(table_i, layers_i, append);
    return out;
}

double bpr_loss_accumulate(std::span<const BprTriplet> batch, const ModelState& state, const CollaborativeKG& kg_u,
                           const CollaborativeKG& kg_i, ModelGrads& grads) {
    const auto opts = state.hp.propagation();
    const Propagation pu = propagate(kg_u, state.user_side.table, state.user_side.stack, opts);
    const Propagation pi = propagate(kg_i, state.item_side.table, state.item_side.stack, opts);
    const Representations reps = representations_from(state, pu, pi);
    const std::size_t su = pu.stitched_dim(), si = pi.stitched_dim(), s = su + si;

    Matrix d_users(reps.users.rows(), s), d_items(reps.items.rows(), s);
    double total = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& t = batch[b];
        if (t.user >= reps.users.rows() || t.positive >= reps.items.rows() || t.negative >= reps.items.rows()) {
            throw IndexError("bpr_loss: triplet " + std::to_string(b) + " out of range");
        }
        const auto ru = reps.users.row(t.user);
        const auto ri = reps.items.row(t.positive);
        const auto rj = reps.items.row(t.negative);
        const double x = dot(ru, ri) - dot(ru, rj);
        const double term = neg_log_sigmoid(x);
        if (!std::isfinite(term)) throw NumericFault("bpr_loss: non-finite loss at triplet " + std::to_string(b), b);
        total += term;
        const double c = -sigmoid(-x);  // d term / dx
        auto du = d_users.row(t.user);
        for (std::size_t k = 0; k < s; ++k) du[k] += c * (ri[k] - rj[k]);
        axpy(c, ru, d_items.row(t.positive));
        axpy(-c, ru, d_items.row(t.negative));
    }

    // Scatter representation gradients back onto each graph's stitched rows.
    Matrix ds_u(kg_u.entity_count(), su), ds_i(kg_i.entity_count(), si);
    auto scatter = [&](std::span<const double> g, EntityId eu, EntityId ei) {
        if (eu != kNoEntity) axpy(1.0, g.first(su), ds_u.row(idx(eu)));
        if (ei != kNoEntity) axpy(1.0, g.subspan(su), ds_i.row(idx(ei)));
    };
    for (UserIndex u = 0; u < d_users.rows(); ++u) scatter(d_users.row(u), state.align_u.user(u), state.align_i.user(u));
    for (ItemIndex i = 0; i < d_items.rows(); ++i) scatter(d_items.row(i), state.align_u.item(i), state.align_i.item(i));

    backpropagate(pu, kg_u, state.user_side.table, state.user_side.stack, opts, ds_u, grads.table_u, grads.layers_u);
    backpropagate(pi, kg_i, state.item_side.table, state.item_side.stack, opts, ds_i, grads.table_i, grads.layers_i);
    grads.layers_touched = true;
    return total;
}

BprLoss bpr_loss(std::span<const BprTriplet> batch, const ModelState& state, const CollaborativeKG& kg_u,
                 const CollaborativeKG& kg_i) {
    BprLoss out{0.0, ModelGrads(state)};
    out.loss = bpr_loss_accumulate(batch, state, kg_u, kg_i, out.grads);
    return out;
}

double regularizer(const ModelState& state) {
    double s = 0.0;
    auto add = [&](std::span<const double> b) { s += squared_norm(b); };
    for_each_block(state.user_side, add);
    for_each_block(state.item_side, add);
    return state.hp.lambda * s;
}

namespace {

void add_l2(const GraphParams& p, EmbeddingGrads& g, LayerGrads& lg, double lambda, bool all, bool layers) {
    const double c = 2.0 * lambda;
    for (std::size_t e = 0; e < p.table.entity_count(); ++e) {
        if (!all && !g.entity_touched[e]) continue;
        axpy(c, p.table.entity.row(e), g.grad.entity.row(e));
        g.entity_touched[e] = 1;
    }
    for (std::size_t r = 0; r < p.table.relation_count(); ++r) {
        if (!all && !g.relation_touched[r]) continue;
        axpy(c, p.table.relation.row(r), g.grad.relation.row(r));
        axpy(c, p.table.projection[r].values(), g.grad.projection[r].values());
        g.relation_touched[r] = 1;
    }
    if (all || layers) {
        for (std::size_t l = 0; l < p.stack.w1.size(); ++l) {
            axpy(c, p.stack.w1[l].values(), lg.w1[l].values());
            if (!p.stack.w2.empty()) axpy(c, p.stack.w2[l].values(), lg.w2[l].values());
        }
    }
}

}  // namespace

void add_l2_to_touched(const ModelState& state, ModelGrads& grads) {
    if (state.hp.lambda == 0.0) return;
    add_l2(state.user_side, grads.table_u, grads.layers_u, state.hp.lambda, false, grads.layers_touched);
    add_l2(state.item_side, grads.table_i, grads.layers_i, state.hp.lambda, false, grads.layers_touched);
}

LossTerms total_loss(const ModelState& state, const CollaborativeKG& kg_u, const CollaborativeKG& kg_i,
                     const TripleBatch& batch_u, const TripleBatch& batch_i, std::span<const BprTriplet> cf_batch,
                     ModelGrads* grads) {
    ModelGrads scratch;
    ModelGrads& g = grads ? *grads : scratch;
    if (!grads) g = ModelGrads(state);
    LossTerms t;
    t.kg_u = kg_loss_accumulate(batch_u, state.user_side.table, g.table_u);
    t.kg_i = kg_loss_accumulate(batch_i, state.item_side.table, g.table_i);
    t.cf = bpr_loss_accumulate(cf_batch, state, kg_u, kg_i, g);
    t.reg = regularizer(state);
    t.total = t.kg_u + t.kg_i + t.cf + t.reg;
    add_l2(state.user_side, g.table_u, g.layers_u, state.hp.lambda, true, true);
    add_l2(state.item_side, g.table_i, g.layers_i, state.hp.lambda, true, true);
    g.layers_touched = true;
    return t;
}

AdamOptimizer::AdamOptimizer(const ModelState& like, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
    auto zeros = [](const GraphParams& p) {
        GraphParams z = p;
        for_each_block(z, [](std::span<double> b) { std::fill(b.begin(), b.end(), 0.0); });
        return z;
    };
    user_ = {zeros(like.user_side), zeros(like.user_side)};
    item_ = {zeros(like.item_side), zeros(like.item_side)};
}

namespace {

struct AdamCoeffs {
    double lr, b1, b2, eps, c1, c2;
};

void adam_update(std::span<double> theta, std::span<double> m, std::span<double> v, std::span<const double> g,
                 const AdamCoeffs& k) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
        m[i] = k.b1 * m[i] + (1.0 - k.b1) * g[i];
        v[i] = k.b2 * v[i] + (1.0 - k.b2) * g[i] * g[i];
        const double mhat = m[i] / k.c1;
        const double vhat = v[i] / k.c2;
        theta[i] -= k.lr * mhat / (std::sqrt(vhat) + k.eps);
    }
}

}  // namespace

void AdamOptimizer::update_graph(GraphParams& p, Moments& mo, const EmbeddingGrads& g, const LayerGrads& lg,
                                 bool layers) {
    const AdamCoeffs k{lr_, beta1_, beta2_, eps_, 1.0 - std::pow(beta1_, static_cast<double>(t_)),
                       1.0 - std::pow(beta2_, static_cast<double>(t_))};
    for (std::size_t e = 0; e < p.table.entity_count(); ++e) {
        if (!g.entity_touched[e]) continue;
        adam_update(p.table.entity.row(e), mo.m.table.entity.row(e), mo.v.table.entity.row(e), g.grad.entity.row(e), k);
    }
    for (std::size_t r = 0; r < p.table.relation_count(); ++r) {
        if (!g.relation_touched[r]) continue;
        adam_update(p.table.relation.row(r), mo.m.table.relation.row(r), mo.v.table.relation.row(r),
                    g.grad.relation.row(r), k);
        adam_update(p.table.projection[r].values(), mo.m.table.projection[r].values(),
                    mo.v.table.projection[r].values(), g.grad.projection[r].values(), k);
    }
    if (layers) {
        for (std::size_t l = 0; l < p.stack.w1.size(); ++l) {
            adam_update(p.stack.w1[l].values(), mo.m.stack.w1[l].values(), mo.v.stack.w1[l].values(),
                        lg.w1[l].values(), k);
            if (!p.stack.w2.empty()) {
                adam_update(p.stack.w2[l].values(), mo.m.stack.w2[l].values(), mo.v.stack.w2[l].values(),
                            lg.w2[l].values(), k);
            }
        }
    }
}

void AdamOptimizer::step(ModelState& state, const ModelGrads& grads) {
    ++t_;
    update_graph(state.user_side, user_, grads.table_u, grads.layers_u, grads.layers_touched);
    update_graph(state.item_side, item_, grads.table_i, grads.layers_i, grads.layers_touched);
}

std::vector<BprTriplet> sample_bpr_triplets(const PreparedDataset& data, const ModelState& state, Rng& rng) {
    const std::size_t n_items = state.item_count();
    auto warm_user = [&](UserIndex u) { return state.align_u.user(u) != kNoEntity && state.align_i.user(u) != kNoEntity; };
    auto warm_item = [&](ItemIndex i) { return state.align_u.item(i) != kNoEntity && state.align_i.item(i) != kNoEntity; };

    std::vector<BprTriplet> out;
    out.reserve(data.train_graph.edges.size());
    for (const auto& e : data.train_graph.edges) {
        if (!warm_user(e.user) || !warm_item(e.item)) continue;
        const auto& seen = data.train_items[e.user];
        auto valid = [&](ItemIndex j) { return warm_item(j) && !std::binary_search(seen.begin(), seen.end(), j); };
        std::optional<ItemIndex> neg;
        for (int attempt = 0; attempt < 64 && !neg; ++attempt) {
            const auto j = static_cast<ItemIndex>(rng.below(n_items));
            if (valid(j)) neg = j;
        }
        if (!neg) {
            std::vector<ItemIndex> pool;
            for (ItemIndex j = 0; j < n_items; ++j) {
                if (valid(j)) pool.push_back(j);
            }
            if (pool.empty()) continue;
            neg = pool[rng.below(pool.size())];
        }
        out.push_back({e.user, e.item, *neg});
    }
    shuffle(out, rng);
    return out;
}

TrainResult train(ModelState state, const PreparedDataset& data, const TrainHooks& hooks) {
    const Hyperparameters& hp = state.hp;
    if (hp.kg_batch == 0 || hp.cf_batch == 0) throw ConfigError("batch sizes must be positive");
    if (hp.eval_k == 0) throw ConfigError("eval K must be at least 1");
    const auto& kg_u = data.user_side.kg;
    const auto& kg_i = data.item_side.kg;
    if (state.user_side.table.entity_count() != kg_u.entity_count() ||
        state.item_side.table.entity_count() != kg_i.entity_count() ||
        state.user_side.table.relation_count() != kg_u.relation_count() ||
        state.item_side.table.relation_count() != kg_i.relation_count()) {
        throw DimensionConflict("model state does not match the dataset's graphs");
    }

    TrainResult result;
    AdamOptimizer adam(state, hp.learning_rate);
    ModelGrads grads(state);

    bool have_validation = false;
    for (const auto& v : data.validation_items) have_validation = have_validation || !v.empty();
    double best_recall = -1.0;
    std::size_t since_best = 0;
    ModelState best = state;

    auto kg_pass = [&](const CollaborativeKG& kg, bool user_side, Rng& rng) {
        std::vector<std::size_t> order(kg.triple_count());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle(order, rng);
        double total = 0.0;
        const auto triples = kg.triples();
        std::vector<Triple> positives;
        for (std::size_t b = 0; b < order.size(); b += hp.kg_batch) {
            positives.clear();
            for (std::size_t j = b; j < std::min(order.size(), b + hp.kg_batch); ++j) positives.push_back(triples[order[j]]);
            const TripleBatch batch = make_triple_batch(positives, kg, rng, hp.corrupt_heads);
            grads.clear();
            const auto& table = user_side ? state.user_side.table : state.item_side.table;
            total += kg_loss_accumulate(batch, table, user_side ? grads.table_u : grads.table_i);
            add_l2_to_touched(state, grads);
            adam.step(state, grads);
        }
        return total;
    };

    for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
        const ModelState last_good = state;
        EpochLog log;
        log.epoch = epoch;
        try {
            Rng rng(hp.seed, 1000 + epoch);
            log.kg_u = kg_pass(kg_u, true, rng);
            log.kg_i = kg_pass(kg_i, false, rng);

            const auto triplets = sample_bpr_triplets(data, state, rng);
            for (std::size_t b = 0; b < triplets.size(); b += hp.cf_batch) {
                const auto batch = std::span(triplets).subspan(b, std::min(hp.cf_batch, triplets.size() - b));
                grads.clear();
                log.cf += bpr_loss_accumulate(batch, state, kg_u, kg_i, grads);
                add_l2_to_touched(state, grads);
                adam.step(state, grads);
            }
            log.reg = regularizer(state);
            log.total = log.kg_u + log.kg_i + log.cf + log.reg;
            if (!std::isfinite(log.total)) throw NumericFault("training loss became non-finite at epoch " + std::to_string(epoch));
            for_each_block(state.user_side, [](std::span<const double> b) { check_finite(b, "user-side parameters"); });
            for_each_block(state.item_side, [](std::span<const double> b) { check_finite(b, "item-side parameters"); });
        } catch (const NumericFault& e) {
            result.diverged = true;
            result.message = std::string("diverged: ") + e.what();
            state = last_good;
            break;
        }
        state.epoch = static_cast<std::uint32_t>(epoch);

        if (have_validation) {
            const Representations reps = compute_representations(state, kg_u, kg_i);
            const ModelRanker ranker(reps);
            log.val_recall = evaluate_ranker(ranker, data.train_items, data.validation_items, hp.eval_k, hp.workers).recall;
        }
        result.history.push_back(log);
        if (hooks.on_epoch) hooks.on_epoch(log);

        if (have_validation) {
            if (log.val_recall > best_recall) {
                best_recall = log.val_recall;
                best = state;
                result.best_epoch = epoch;
                since_best = 0;
            } else if (++since_best >= hp.patience) {
                result.early_stopped = true;
                break;
            }
        }
    }

    if (have_validation && result.best_epoch > 0) {
        result.state = std::move(best);
    } else {
        result.state = std::move(state);
        result.best_epoch = result.history.empty() ? 0 : result.history.back().epoch;
    }
    return result;
}

}  // namespace ckgr
