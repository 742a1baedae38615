#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ckgr/dataset.hpp"
#include "ckgr/eval.hpp"
#include "ckgr/kg.hpp"
#include "ckgr/numeric.hpp"
#include "ckgr/propagation.hpp"
#include "ckgr/transr.hpp"

namespace ckgr {

struct Hyperparameters {
    std::size_t entity_dim = 64;
    std::size_t relation_dim = 64;
    std::size_t layers = 2;
    std::vector<std::size_t> layer_dims{32, 16};  // d_1.., extended or truncated to `layers`
    double learning_rate = 0.001;
    double lambda = 1e-5;
    double init_std = 0.1;
    double slope = 0.2;
    std::size_t kg_batch = 1024;
    std::size_t cf_batch = 1024;
    std::size_t epochs = 100;
    std::size_t patience = 10;
    std::size_t eval_k = 10;
    std::uint64_t seed = 42;
    bool shared_weights = true;
    AttentionForm attention = AttentionForm::Relation;
    bool corrupt_heads = false;
    std::size_t workers = 1;

    std::vector<std::size_t> dims() const { return resolve_layer_dims(entity_dim, layer_dims, layers); }
    PropagationOptions propagation() const { return {slope, attention}; }

    friend bool operator==(const Hyperparameters&, const Hyperparameters&) = default;
};

struct GraphParams {
    EmbeddingTable table;
    LayerStack stack;

    friend bool operator==(const GraphParams&, const GraphParams&) = default;
};

// Calls fn(std::span<double>) for every parameter block in checkpoint order:
// entity, relation, projections, then per layer W1 (and W2).
template <typename Params, typename Fn>
void for_each_block(Params& p, Fn&& fn) {
    fn(p.table.entity.values());
    fn(p.table.relation.values());
    for (auto& w : p.table.projection) fn(w.values());
    for (std::size_t l = 0; l < p.stack.w1.size(); ++l) {
        fn(p.stack.w1[l].values());
        if (!p.stack.w2.empty()) fn(p.stack.w2[l].values());
    }
}

struct ModelState {
    GraphParams user_side;  // parameters over the user-side graph
    GraphParams item_side;  // parameters over the item-side graph
    AlignmentMap align_u;
    AlignmentMap align_i;
    Hyperparameters hp;
    std::vector<std::string> user_names;
    std::vector<std::string> item_names;
    std::map<std::string, std::string> config_echo;
    std::uint32_t epoch = 0;

    std::size_t user_count() const noexcept { return user_names.size(); }
    std::size_t item_count() const noexcept { return item_names.size(); }

    friend bool operator==(const ModelState&, const ModelState&) = default;
};

// Gaussian-initialized parameters sized to the dataset's two graphs.
ModelState init_model(const Hyperparameters& hp, const PreparedDataset& data);

std::size_t parameter_count(const ModelState& s);
std::vector<double> flatten_parameters(const ModelState& s);
void assign_parameters(ModelState& s, std::span<const double> flat);

enum class ColdPolicy { Throw, Zero };
enum class NodeSide { User, Item };

// [stitched from user-side graph ; stitched from item-side graph]. A side where the id
// has no entity contributes zeros under ColdPolicy::Zero and throws ColdEntityError otherwise.
Vector final_representation(NodeSide side, std::uint32_t id, const ModelState& state, const Propagation& prop_u,
                            const Propagation& prop_i, ColdPolicy policy = ColdPolicy::Throw);

struct Representations {
    Matrix users;  // U x 2S
    Matrix items;  // I x 2S
};

Representations compute_representations(const ModelState& state, const CollaborativeKG& kg_u,
                                        const CollaborativeKG& kg_i);

double predict_score(const Representations& reps, UserIndex u, ItemIndex i);

class ModelRanker final : public Ranker {
public:
    explicit ModelRanker(const Representations& reps) : reps_(&reps) {}
    std::size_t item_count() const override { return reps_->items.rows(); }
    void score(UserIndex user, std::span<double> out) const override;

private:
    const Representations* reps_;
};

struct BprTriplet {
    UserIndex user;
    ItemIndex positive;
    ItemIndex negative;
};

struct ModelGrads {
    EmbeddingGrads table_u;
    EmbeddingGrads table_i;
    LayerGrads layers_u;
    LayerGrads layers_i;
    bool layers_touched = false;

    ModelGrads() = default;
    explicit ModelGrads(const ModelState& like);
    void clear();
    std::vector<double> flatten() const;
};

struct BprLoss {
    double loss = 0.0;
    ModelGrads grads;
};

// L_CF = sum -ln sigma(y(u,i) - y(u,j)); gradients flow through prediction, both
// propagations and the embedding tables.
BprLoss bpr_loss(std::span<const BprTriplet> batch, const ModelState& state, const CollaborativeKG& kg_u,
                 const CollaborativeKG& kg_i);
double bpr_loss_accumulate(std::span<const BprTriplet> batch, const ModelState& state, const CollaborativeKG& kg_u,
                           const CollaborativeKG& kg_i, ModelGrads& grads);

// lambda * ||Theta||^2 over every trainable parameter.
double regularizer(const ModelState& state);

struct LossTerms {
    double kg_u = 0.0;
    double kg_i = 0.0;
    double cf = 0.0;
    double reg = 0.0;
    double total = 0.0;
};

// L = L_KG(user side) + L_KG(item side) + L_CF + lambda ||Theta||^2. When `grads` is given
// it receives the gradient of L.
LossTerms total_loss(const ModelState& state, const CollaborativeKG& kg_u, const CollaborativeKG& kg_i,
                     const TripleBatch& batch_u, const TripleBatch& batch_i, std::span<const BprTriplet> cf_batch,
                     ModelGrads* grads = nullptr);

// Adam with per-row lazy updates: rows never touched by a step keep their parameters
// and moment estimates unchanged.
class AdamOptimizer {
public:
    AdamOptimizer(const ModelState& like, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(ModelState& state, const ModelGrads& grads);
    std::uint64_t steps() const noexcept { return t_; }

private:
    struct Moments {
        GraphParams m;
        GraphParams v;
    };

    void update_graph(GraphParams& p, Moments& mo, const EmbeddingGrads& g, const LayerGrads& lg, bool layers);

    double lr_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    Moments user_, item_;
};

// Adds the L2 term 2 lambda theta to the gradient of every touched row.
void add_l2_to_touched(const ModelState& state, ModelGrads& grads);

struct EpochLog {
    std::size_t epoch = 0;
    double kg_u = 0.0;
    double kg_i = 0.0;
    double cf = 0.0;
    double reg = 0.0;
    double total = 0.0;
    double val_recall = 0.0;
};

struct TrainResult {
    ModelState state;
    std::vector<EpochLog> history;
    bool diverged = false;
    bool early_stopped = false;
    std::size_t best_epoch = 0;
    std::string message;
};

struct TrainHooks {
    std::function<void(const EpochLog&)> on_epoch;
};

// Per epoch: KG mini-batches on the user-side graph, then on the item-side graph, then
// BPR mini-batches. Validation Recall@K drives early stopping and the returned state is
// the best validated one. A non-finite loss aborts training and returns the last good state.
TrainResult train(ModelState state, const PreparedDataset& data, const TrainHooks& hooks = {});

std::vector<BprTriplet> sample_bpr_triplets(const PreparedDataset& data, const ModelState& state, Rng& rng);

}  // namespace ckgr
