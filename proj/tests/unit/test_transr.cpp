#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "ckgr/transr.hpp"
#include "../support/toy.hpp"

using namespace ckgr;
using namespace ckgr::testing;

namespace {

// Orthogonal matrix by Gram-Schmidt on a random Gaussian matrix.
Matrix random_rotation(std::size_t k, Rng& rng) {
    Matrix q = gaussian_init(k, k, 1.0, rng);
    for (std::size_t i = 0; i < k; ++i) {
        auto qi = q.row(i);
        for (std::size_t j = 0; j < i; ++j) {
            const double p = dot(qi, q.row(j));
            axpy(-p, q.row(j), qi);
        }
        const double n = std::sqrt(squared_norm(qi));
        for (auto& x : qi) x /= n;
    }
    return q;
}

double energy_oracle(const Triple& t, const EmbeddingTable& tab) {
    const Matrix& w = tab.projection[idx(t.relation)];
    double g = 0.0;
    for (std::size_t i = 0; i < w.rows(); ++i) {
        double v = tab.relation(idx(t.relation), i);
        for (std::size_t j = 0; j < w.cols(); ++j) {
            v += w(i, j) * (tab.entity(idx(t.head), j) - tab.entity(idx(t.tail), j));
        }
        g += v * v;
    }
    return g;
}

// Upper 1% point of chi-square with k dof (Wilson-Hilferty).
double chi2_critical_99(double k) {
    const double z = 2.3263478740408408;
    const double a = 2.0 / (9.0 * k);
    return k * std::pow(1.0 - a + z * std::sqrt(a), 3.0);
}

}  // namespace

TEST(Project, IdentityZeroAndColumn) {
    const auto kg = toy_kg(2, 1, {{0, 0, 1}});
    auto tab = EmbeddingTable::zeros(2, 1, 3, 3);
    tab.projection[0] = Matrix::identity(3);
    const std::vector<double> e{1.5, -2.0, 0.25};
    EXPECT_EQ(project(e, relation_id(0), tab), e);
    tab.projection[0].fill(0.0);
    EXPECT_EQ(project(e, relation_id(0), tab), (Vector{0, 0, 0}));

    Rng rng(4);
    auto t2 = EmbeddingTable::zeros(2, 1, 4, 3);
    t2.projection[0] = gaussian_init(3, 4, 1.0, rng);
    const Vector col = project(std::vector<double>{0, 0, 1, 0}, relation_id(0), t2);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(col[i], t2.projection[0](i, 2));
    EXPECT_THROW(project(e, relation_id(3), tab), IndexError);
}

TEST(Energy, DegenerateAndExactTranslation) {
    Rng rng(1);
    auto tab = EmbeddingTable::gaussian(2, 1, 2, 2, 1.0, rng);
    tab.relation.fill(0.0);
    EXPECT_EQ(triple_energy({entity_id(0), relation_id(0), entity_id(0)}, tab), 0.0);

    tab.projection[0] = Matrix::identity(2);
    tab.entity(0, 0) = 1;
    tab.entity(0, 1) = 0;
    tab.relation(0, 0) = 0;
    tab.relation(0, 1) = 1;
    tab.entity(1, 0) = 1;
    tab.entity(1, 1) = 1;
    EXPECT_EQ(triple_energy({entity_id(0), relation_id(0), entity_id(1)}, tab), 0.0);
}

TEST(Energy, MatchesOracleAndNonNegative) {
    const auto kg = toy_kg(6, 2, {{0, 0, 1}});
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto tab = random_table(kg, 5, 3, s);
        for (std::uint32_t h = 0; h < 6; ++h) {
            const Triple t{entity_id(h), relation_id(h % 2), entity_id((h + 1) % 6)};
            const double g = triple_energy(t, tab);
            EXPECT_GE(g, 0.0);
            EXPECT_NEAR(g, energy_oracle(t, tab), 1e-12);
        }
    }
}

TEST(Energy, RotationInvariant) {
    const auto kg = toy_kg(4, 2, {{0, 0, 1}, {2, 1, 3}});
    Rng rng(77);
    auto tab = random_table(kg, 5, 4, 3);
    const Triple t{entity_id(0), relation_id(1), entity_id(3)};
    const double before = triple_energy(t, tab);
    const Matrix q = random_rotation(4, rng);
    for (std::size_t r = 0; r < 2; ++r) {
        const Vector er = matvec(q, tab.relation.row(r));
        std::copy(er.begin(), er.end(), tab.relation.row(r).begin());
        Matrix w(4, 5);
        for (std::size_t c = 0; c < 5; ++c) {
            Vector col(4);
            for (std::size_t i = 0; i < 4; ++i) col[i] = tab.projection[r](i, c);
            const Vector rc = matvec(q, col);
            for (std::size_t i = 0; i < 4; ++i) w(i, c) = rc[i];
        }
        tab.projection[r] = w;
    }
    EXPECT_NEAR(triple_energy(t, tab), before, 1e-9);
}

TEST(NegativeSampling, NeverReturnsPositive) {
    const auto kg = toy_kg(3, 1, {{0, 0, 1}});
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const auto t = sample_negative_tail(entity_id(0), relation_id(0), kg, rng);
        ASSERT_NE(t, entity_id(1));
        ASSERT_FALSE(kg.contains(entity_id(0), relation_id(0), t));
    }
}

TEST(NegativeSampling, UniformOverValidTails) {
    const auto kg = toy_kg(100, 1, {{0, 0, 1}});
    Rng rng(2024);
    std::vector<double> counts(100, 0.0);
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) counts[idx(sample_negative_tail(entity_id(0), relation_id(0), kg, rng))] += 1;
    EXPECT_EQ(counts[1], 0.0);
    const double expected = draws / 99.0;
    double chi2 = 0.0;
    for (std::size_t t = 0; t < 100; ++t) {
        if (t == 1) continue;
        chi2 += (counts[t] - expected) * (counts[t] - expected) / expected;
    }
    EXPECT_LT(chi2, chi2_critical_99(98.0));
}

TEST(NegativeSampling, ExhaustedWhenFullyConnected) {
    const auto kg = toy_kg(3, 1, {{0, 0, 0}, {0, 0, 1}, {0, 0, 2}});
    Rng rng(1);
    EXPECT_THROW(sample_negative_tail(entity_id(0), relation_id(0), kg, rng), SamplingExhausted);
    EXPECT_NO_THROW(sample_negative_tail(entity_id(1), relation_id(0), kg, rng));
    const auto kg2 = toy_kg(2, 1, {{0, 0, 1}, {1, 0, 1}});
    EXPECT_THROW(sample_negative_head(relation_id(0), entity_id(1), kg2, rng), SamplingExhausted);
}

TEST(NegativeSampling, BatchNegativesAbsentFromGraph) {
    const auto kg = toy_kg(6, 2, {{0, 0, 1}, {0, 1, 2}, {3, 0, 4}, {5, 1, 0}, {2, 0, 3}});
    Rng rng(8);
    const auto triples = kg.triples();
    for (bool heads : {false, true}) {
        const auto batch = make_triple_batch(triples, kg, rng, heads);
        ASSERT_EQ(batch.positives.size(), batch.negatives.size());
        for (std::size_t i = 0; i < batch.negatives.size(); ++i) {
            const auto& n = batch.negatives[i];
            const auto& p = batch.positives[i];
            EXPECT_FALSE(kg.contains(n.head, n.relation, n.tail));
            EXPECT_EQ(n.relation, p.relation);
            if (!heads) EXPECT_EQ(n.head, p.head);
            EXPECT_TRUE(n.head == p.head || n.tail == p.tail);
        }
    }
}

TEST(KgLoss, FixedPointLn2) {
    const auto kg = toy_kg(5, 2, {{0, 0, 1}, {1, 1, 2}, {2, 0, 3}});
    const auto tab = random_table(kg, 4, 3, 12);
    TripleBatch b;
    // Negatives equal to positives give equal energies.
    for (const auto& t : kg.triples()) {
        b.positives.push_back(t);
        b.negatives.push_back(t);
    }
    EXPECT_NEAR(kg_loss(b, tab).loss, 3 * std::log(2.0), 1e-9);
}

TEST(KgLoss, SaturatesToZero) {
    const auto kg = toy_kg(3, 1, {{0, 0, 1}});
    auto tab = EmbeddingTable::zeros(3, 1, 2, 2);
    tab.projection[0] = Matrix::identity(2);
    tab.entity(2, 0) = 1e3;  // the negative tail is far away
    TripleBatch b{{{entity_id(0), relation_id(0), entity_id(1)}}, {{entity_id(0), relation_id(0), entity_id(2)}}};
    EXPECT_LT(kg_loss(b, tab).loss, 1e-12);
}

TEST(KgLoss, GradientMatchesFiniteDifferences) {
    const auto kg = toy_kg(5, 2, {{0, 0, 1}, {1, 1, 2}, {2, 0, 3}, {3, 1, 4}, {4, 0, 0}});
    Rng rng(3);
    const auto first4 = kg.triples().subspan(0, 4);
    const auto batch = make_triple_batch(first4, kg, rng);
    const auto tab = random_table(kg, 4, 3, 21);
    const auto res = kg_loss(batch, tab);
    const auto params = flatten(tab);
    const auto analytic = flatten(res.grads.grad);
    const auto rep = finite_diff_check(
        [&](std::span<const double> p) {
            auto t = tab;
            assign(t, p);
            return kg_loss(batch, t).loss;
        },
        params, analytic);
    EXPECT_LE(rep.max_rel_error, 1e-4) << "worst index " << rep.worst_index;
}

TEST(KgLoss, NonFiniteReportsPairIndex) {
    const auto kg = toy_kg(3, 1, {{0, 0, 1}});
    auto tab = EmbeddingTable::zeros(3, 1, 2, 2);
    tab.entity(2, 0) = NAN;
    TripleBatch b{{{entity_id(0), relation_id(0), entity_id(1)}, {entity_id(0), relation_id(0), entity_id(1)}},
                  {{entity_id(0), relation_id(0), entity_id(0)}, {entity_id(0), relation_id(0), entity_id(2)}}};
    try {
        kg_loss(b, tab);
        FAIL();
    } catch (const NumericFault& e) {
        EXPECT_EQ(e.index(), 1u);
    }
}

TEST(KgLoss, GradientDescentDecreasesMonotonically) {
    std::vector<Edge> edges;
    for (std::uint32_t i = 0; i < 10; ++i) edges.push_back({i % 6, i % 2, (i * 7 + 3) % 8});
    const auto kg = toy_kg(8, 2, edges);
    ASSERT_EQ(kg.triple_count(), 10u);
    Rng rng(17);
    const auto batch = make_triple_batch(kg.triples(), kg, rng);
    auto tab = random_table(kg, 4, 4, 5);
    std::vector<double> losses;
    for (int step = 0; step < 50; ++step) {
        const auto r = kg_loss(batch, tab);
        losses.push_back(r.loss);
        auto p = flatten(tab);
        const auto g = flatten(r.grads.grad);
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= 0.01 * g[i];
        assign(tab, p);
    }
    for (std::size_t s = 3; s < losses.size(); ++s) EXPECT_LT(losses[s], losses[s - 1]) << "step " << s;
}

TEST(KgLoss, OnlyBatchRowsReceiveGradient) {
    const auto kg = toy_kg(7, 3, {{0, 0, 1}, {2, 1, 3}, {4, 2, 5}});
    Rng rng(2);
    const auto first = kg.triples().subspan(0, 1);
    TripleBatch b{{first[0]}, {{entity_id(0), relation_id(0), entity_id(2)}}};
    const auto tab = random_table(kg, 3, 3, 9);
    const auto r = kg_loss(b, tab);
    const std::set<std::size_t> touched_entities{0, 1, 2};
    for (std::size_t e = 0; e < 7; ++e) {
        const bool t = touched_entities.count(e) != 0;
        EXPECT_EQ(r.grads.entity_touched[e] != 0, t);
        if (!t) {
            for (double g : r.grads.grad.entity.row(e)) EXPECT_EQ(g, 0.0);
        }
    }
    EXPECT_TRUE(r.grads.relation_touched[0]);
    for (std::size_t rel = 1; rel < 3; ++rel) {
        EXPECT_FALSE(r.grads.relation_touched[rel]);
        for (double g : r.grads.grad.projection[rel].values()) EXPECT_EQ(g, 0.0);
        for (double g : r.grads.grad.relation.row(rel)) EXPECT_EQ(g, 0.0);
    }
}
