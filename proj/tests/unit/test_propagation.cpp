#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "ckgr/propagation.hpp"
#include "../support/reference.hpp"
#include "../support/toy.hpp"

using namespace ckgr;
using namespace ckgr::testing;

namespace {

std::vector<double> flatten_all(const EmbeddingTable& t, const LayerStack& s) {
    auto out = flatten(t);
    for (std::size_t l = 0; l < s.layers(); ++l) {
        out.insert(out.end(), s.w1[l].values().begin(), s.w1[l].values().end());
        if (!s.w2.empty()) out.insert(out.end(), s.w2[l].values().begin(), s.w2[l].values().end());
    }
    return out;
}

void assign_all(EmbeddingTable& t, LayerStack& s, std::span<const double> flat) {
    const auto n = flatten(t).size();
    assign(t, flat.subspan(0, n));
    std::size_t pos = n;
    auto take = [&](Matrix& m) {
        std::copy(flat.begin() + pos, flat.begin() + pos + m.size(), m.values().begin());
        pos += m.size();
    };
    for (std::size_t l = 0; l < s.layers(); ++l) {
        take(s.w1[l]);
        if (!s.w2.empty()) take(s.w2[l]);
    }
}

const std::vector<Edge> kFiveNodeSixEdges{{0, 0, 1}, {0, 1, 2}, {1, 0, 3}, {2, 1, 4}, {3, 0, 0}, {4, 1, 1}};

}  // namespace

TEST(AttentionLogit, ZeroCases) {
    const auto kg = toy_kg(3, 1, {{0, 0, 1}});
    auto tab = random_table(kg, 2, 2, 1);
    tab.entity.row(1)[0] = 0;
    tab.entity.row(1)[1] = 0;
    EXPECT_EQ(attention_logit(entity_id(0), relation_id(0), entity_id(1), tab), 0.0);

    auto tab2 = random_table(kg, 2, 2, 2);
    tab2.projection[0] = Matrix::identity(2);
    tab2.entity(0, 0) = 0.3;
    tab2.entity(0, 1) = -0.4;
    tab2.relation(0, 0) = -0.3;
    tab2.relation(0, 1) = 0.4;
    EXPECT_EQ(attention_logit(entity_id(0), relation_id(0), entity_id(2), tab2), 0.0);
}

TEST(AttentionLogit, SaturatesTowardOne) {
    const auto kg = toy_kg(2, 1, {{0, 0, 1}});
    auto tab = EmbeddingTable::zeros(2, 1, 2, 2);
    tab.projection[0] = Matrix::identity(2);
    tab.relation(0, 1) = 50.0;
    tab.entity(1, 1) = 1.0;
    EXPECT_NEAR(attention_logit(entity_id(0), relation_id(0), entity_id(1), tab), 1.0, 1e-12);
}

TEST(AttentionLogit, PrintedFormUsesTail) {
    const auto kg = toy_kg(2, 1, {{0, 0, 1}});
    auto tab = random_table(kg, 3, 3, 5);
    const auto h = tab.entity.row(0), t = tab.entity.row(1);
    const Vector wt = matvec(tab.projection[0], t), wh = matvec(tab.projection[0], h);
    double expect = 0.0;
    for (std::size_t i = 0; i < 3; ++i) expect += wt[i] * std::tanh(wh[i] + t[i]);
    EXPECT_NEAR(attention_logit(entity_id(0), relation_id(0), entity_id(1), tab, AttentionForm::Printed), expect,
                1e-14);
    auto rect = random_table(kg, 3, 2, 5);
    EXPECT_THROW(attention_logit(entity_id(0), relation_id(0), entity_id(1), rect, AttentionForm::Printed),
                 ConfigError);
}

TEST(AttentionWeights, OneAndTwoNeighbors) {
    const auto kg = toy_kg(4, 1, {{0, 0, 1}, {2, 0, 1}, {2, 0, 3}});
    auto tab = random_table(kg, 3, 3, 7);
    EXPECT_TRUE(attention_weights(entity_id(1), kg, tab).empty());
    EXPECT_EQ(attention_weights(entity_id(0), kg, tab), (Vector{1.0}));
    // Identical tails give identical logits.
    for (std::size_t i = 0; i < 3; ++i) tab.entity(3, i) = tab.entity(1, i);
    const auto w = attention_weights(entity_id(2), kg, tab);
    ASSERT_EQ(w.size(), 2u);
    EXPECT_EQ(w[0], 0.5);
    EXPECT_EQ(w[1], 0.5);
}

TEST(AttentionWeights, ThreeNeighborsMatchOracle) {
    const auto kg = toy_kg(5, 2, {{0, 0, 1}, {0, 1, 2}, {0, 0, 3}});
    const auto tab = random_table(kg, 4, 3, 31);
    std::vector<double> logits;
    for (const auto& n : kg.neighbors(entity_id(0))) {
        logits.push_back(attention_logit(entity_id(0), n.relation, n.tail, tab));
    }
    double z = 0.0;
    for (double l : logits) z += std::exp(l);
    const auto w = attention_weights(entity_id(0), kg, tab);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(w[i], std::exp(logits[i]) / z, 1e-12);
}

TEST(Message, EmptySingleAndMean) {
    const auto kg = toy_kg(4, 1, {{0, 0, 1}, {2, 0, 1}, {2, 0, 3}});
    auto tab = random_table(kg, 3, 3, 8);
    EXPECT_EQ(neighborhood_message(entity_id(1), kg, tab), (Vector{0, 0, 0}));
    const auto single = neighborhood_message(entity_id(0), kg, tab);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(single[i], tab.entity(1, i));

    // Equal logits: tail 3 differs from tail 1 only where W_r ignores it.
    tab.projection[0].fill(0.0);
    const auto mean = neighborhood_message(entity_id(2), kg, tab);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(mean[i], 0.5 * (tab.entity(1, i) + tab.entity(3, i)), 1e-15);
}

TEST(BiInteraction, HandCases) {
    const Matrix eye = Matrix::identity(3);
    const std::vector<double> eh{1.0, -2.0, 0.5};
    const auto a = bi_interaction_aggregate(eh, std::vector<double>{0, 0, 0}, eye, nullptr, 0.2);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(a[i], leaky_relu(eh[i], 0.2));
    const std::vector<double> ones{1, 1, 1};
    EXPECT_EQ(bi_interaction_aggregate(ones, ones, eye, nullptr, 0.2), (Vector{3, 3, 3}));
    EXPECT_THROW(bi_interaction_aggregate(ones, std::vector<double>{1, 1}, eye, nullptr, 0.2), ShapeError);
}

TEST(BiInteraction, RandomMatchesFormula) {
    Rng rng(13);
    const Matrix w1 = gaussian_init(3, 4, 1.0, rng), w2 = gaussian_init(3, 4, 1.0, rng);
    const Matrix v = gaussian_init(2, 4, 1.0, rng);
    for (const Matrix* second : {static_cast<const Matrix*>(nullptr), &w2}) {
        const auto out = bi_interaction_aggregate(v.row(0), v.row(1), w1, second, 0.2);
        const Matrix& p = second ? w2 : w1;
        for (std::size_t o = 0; o < 3; ++o) {
            double s1 = 0, s2 = 0;
            for (std::size_t i = 0; i < 4; ++i) {
                s1 += w1(o, i) * (v(0, i) + v(1, i));
                s2 += p(o, i) * (v(0, i) * v(1, i));
            }
            EXPECT_NEAR(out[o], leaky_relu(s1, 0.2) + leaky_relu(s2, 0.2), 1e-12);
        }
    }
}

TEST(LayerDims, ResolveExtendsAndTruncates) {
    const std::vector<std::size_t> dims{32, 16};
    EXPECT_EQ(resolve_layer_dims(64, dims, 2), (std::vector<std::size_t>{64, 32, 16}));
    EXPECT_EQ(resolve_layer_dims(64, dims, 1), (std::vector<std::size_t>{64, 32}));
    EXPECT_EQ(resolve_layer_dims(64, dims, 4), (std::vector<std::size_t>{64, 32, 16, 16, 16}));
    EXPECT_EQ(LayerStack::zeros({64, 32, 16}, true).stitched_dim(), 112u);
}

TEST(Propagate, EdgelessReducesToActivatedLinear) {
    const auto kg = toy_kg(4, 1, {});
    const auto tab = random_table(kg, 4, 4, 3);
    const auto stack = random_stack({4, 3, 2}, true, 3);
    const auto p = propagate(kg, tab, stack);
    for (std::size_t l = 1; l <= 2; ++l) {
        for (std::size_t e = 0; e < 4; ++e) {
            const Vector z = matvec(stack.w1[l - 1], p.layers[l - 1].row(e));
            for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(p.layers[l](e, i), leaky_relu(z[i], 0.2), 1e-15);
        }
    }
}

TEST(Propagate, OneEdgeOneLayer) {
    const auto kg = toy_kg(2, 1, {{0, 0, 1}});
    const auto tab = random_table(kg, 3, 3, 4);
    const auto stack = random_stack({3, 2}, true, 4);
    const auto p = propagate(kg, tab, stack);
    const auto agg = bi_interaction_aggregate(tab.entity.row(0), tab.entity.row(1), stack.w1[0], nullptr, 0.2);
    const auto s = p.stitched(entity_id(0));
    ASSERT_EQ(s.size(), 5u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(s[i], tab.entity(0, i));
    for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(s[3 + i], agg[i], 1e-15);
}

TEST(Propagate, MatchesBruteForceReference) {
    for (bool shared : {true, false}) {
        const auto kg = toy_kg(5, 2, kFiveNodeSixEdges);
        const auto tab = random_table(kg, 4, 3, 42);
        const auto stack = random_stack({4, 3, 2}, shared, 42);
        const auto p = propagate(kg, tab, stack);
        std::vector<std::tuple<int, int, int>> triples;
        for (const auto& [h, r, t] : kFiveNodeSixEdges) triples.emplace_back(h, r, t);
        const auto ref = reference_propagate_stitched(triples, 5, tab, stack, 0.2);
        for (std::uint32_t e = 0; e < 5; ++e) {
            const auto s = p.stitched(entity_id(e));
            ASSERT_EQ(s.size(), ref[e].size());
            for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(s[i], ref[e][i], 1e-10);
        }
    }
}

TEST(Propagate, RelabelingInvariance) {
    Rng rng(20);
    std::vector<Edge> edges;
    for (int i = 0; i < 45; ++i) {
        edges.push_back({static_cast<std::uint32_t>(rng.below(20)), static_cast<std::uint32_t>(rng.below(3)),
                         static_cast<std::uint32_t>(rng.below(20))});
    }
    const auto kg = toy_kg(20, 3, edges);
    const auto tab = random_table(kg, 4, 4, 6);
    const auto stack = random_stack({4, 4, 3}, false, 6);
    const auto base = propagate(kg, tab, stack);

    std::vector<std::uint32_t> perm(20);
    std::iota(perm.begin(), perm.end(), 0u);
    shuffle(perm, rng);
    // Permute entity ids, keeping each head's neighbor order.
    std::vector<Edge> pedges;
    for (const auto& t : kg.triples()) pedges.push_back({perm[idx(t.head)], idx(t.relation), perm[idx(t.tail)]});
    const auto pkg = toy_kg(20, 3, pedges);
    auto ptab = tab;
    for (std::size_t e = 0; e < 20; ++e) {
        std::copy(tab.entity.row(e).begin(), tab.entity.row(e).end(), ptab.entity.row(perm[e]).begin());
    }
    const auto moved = propagate(pkg, ptab, stack);
    for (std::size_t e = 0; e < 20; ++e) {
        const auto a = base.stitched(entity_id(e));
        const auto b = moved.stitched(entity_id(perm[e]));
        for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-13);
    }
}

TEST(Propagate, WeightsNormalizedPerHead) {
    const auto kg = toy_kg(5, 2, kFiveNodeSixEdges);
    const auto p = propagate(kg, random_table(kg, 4, 3, 1), random_stack({4, 2}, true, 1));
    const auto off = kg.offsets();
    for (std::size_t h = 0; h < 5; ++h) {
        double s = 0.0;
        for (std::size_t j = off[h]; j < off[h + 1]; ++j) {
            EXPECT_GE(p.weights[j], 0.0);
            s += p.weights[j];
        }
        if (off[h + 1] > off[h]) EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Propagate, ShapeErrors) {
    const auto kg = toy_kg(3, 1, {{0, 0, 1}});
    EXPECT_THROW(propagate(kg, random_table(kg, 4, 3, 1), random_stack({5, 2}, true, 1)), ShapeError);
}

class BackpropCheck : public ::testing::TestWithParam<std::tuple<bool, AttentionForm>> {};

TEST_P(BackpropCheck, MatchesFiniteDifferences) {
    const auto [shared, form] = GetParam();
    const auto kg = toy_kg(5, 2, kFiveNodeSixEdges);
    const auto tab = random_table(kg, 3, 3, 8);
    const auto stack = random_stack({3, 3, 2}, shared, 8);
    const PropagationOptions opts{0.2, form};
    const std::size_t S = 3 + 3 + 2;
    Rng rng(55);
    const Matrix coeff = gaussian_init(5, S, 1.0, rng);
    auto loss = [&](const EmbeddingTable& t, const LayerStack& s) {
        const auto p = propagate(kg, t, s, opts);
        double v = 0.0;
        for (std::uint32_t e = 0; e < 5; ++e) v += dot(p.stitched(entity_id(e)), coeff.row(e));
        return v;
    };
    const auto fwd = propagate(kg, tab, stack, opts);
    EmbeddingGrads tg(tab);
    LayerGrads lg(stack);
    backpropagate(fwd, kg, tab, stack, opts, coeff, tg, lg);

    std::vector<double> analytic = flatten(tg.grad);
    for (std::size_t l = 0; l < stack.layers(); ++l) {
        analytic.insert(analytic.end(), lg.w1[l].values().begin(), lg.w1[l].values().end());
        if (!shared) analytic.insert(analytic.end(), lg.w2[l].values().begin(), lg.w2[l].values().end());
    }
    const auto params = flatten_all(tab, stack);
    const auto rep = finite_diff_check(
        [&](std::span<const double> p) {
            auto t = tab;
            auto s = stack;
            assign_all(t, s, p);
            return loss(t, s);
        },
        params, analytic);
    EXPECT_LE(rep.max_rel_error, 1e-4) << "worst index " << rep.worst_index;
}

INSTANTIATE_TEST_SUITE_P(Variants, BackpropCheck,
                         ::testing::Combine(::testing::Bool(),
                                            ::testing::Values(AttentionForm::Relation, AttentionForm::Printed)),
                         [](const auto& info) {
                             return std::string(std::get<0>(info.param) ? "SharedW" : "SeparateW") +
                                    (std::get<1>(info.param) == AttentionForm::Relation ? "Relation" : "Printed");
                         });
