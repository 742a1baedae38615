#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ckgr/kg.hpp"

namespace ckgr {

struct Split {
    std::vector<InteractionRecord> train;
    std::vector<InteractionRecord> validation;
    std::vector<InteractionRecord> test;
    std::uint64_t seed = 0;
    std::array<double, 3> ratios{0.8, 0.1, 0.1};
};

// Per-user random partition. Users with fewer than 3 interactions go entirely to train;
// otherwise validation and test sizes are n * ratio rounded stochastically, so the split
// honors the ratios in expectation. Record order is preserved within each part.
Split split_dataset(std::span<const InteractionRecord> records, std::array<double, 3> ratios, std::uint64_t seed);

// Sorted item ids per user.
using UserItemLists = std::vector<std::vector<ItemIndex>>;

// Highest-scoring items first, ties by ascending item id, skipping `exclude_sorted`.
std::vector<ItemIndex> topk(std::span<const double> scores, std::size_t k, std::span<const ItemIndex> exclude_sorted = {});

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
    std::size_t hits = 0;
};

// precision = hits / K, recall = hits / |truth|. `truth` must be sorted.
PrecisionRecall precision_recall_at_k(std::span<const ItemIndex> recommended, std::span<const ItemIndex> truth,
                                      std::size_t k);

class Ranker {
public:
    virtual ~Ranker() = default;
    virtual std::size_t item_count() const = 0;
    // Writes one score per item; higher ranks first.
    virtual void score(UserIndex user, std::span<double> out) const = 0;
};

class PopularityRanker final : public Ranker {
public:
    PopularityRanker(const UserItemLists& train_items, std::size_t item_count);
    std::size_t item_count() const override { return counts_.size(); }
    void score(UserIndex user, std::span<double> out) const override;

private:
    std::vector<double> counts_;
};

// Seeded per-user shuffle.
class RandomRanker final : public Ranker {
public:
    RandomRanker(std::uint64_t seed, std::size_t item_count) : seed_(seed), items_(item_count) {}
    std::size_t item_count() const override { return items_; }
    void score(UserIndex user, std::span<double> out) const override;

private:
    std::uint64_t seed_;
    std::size_t items_;
};

// Scores exactly the ground-truth items above everything else.
class OracleRanker final : public Ranker {
public:
    OracleRanker(const UserItemLists& truth, std::size_t item_count) : truth_(&truth), items_(item_count) {}
    std::size_t item_count() const override { return items_; }
    void score(UserIndex user, std::span<double> out) const override;

private:
    const UserItemLists* truth_;
    std::size_t items_;
};

struct MetricSummary {
    double precision = 0.0;
    double recall = 0.0;
    std::size_t users = 0;  // users with non-empty ground truth
};

// Macro-averaged Precision@K / Recall@K over users with non-empty ground truth.
// `workers` > 1 ranks users on parallel threads; results do not depend on it.
MetricSummary evaluate_ranker(const Ranker& ranker, const UserItemLists& exclude, const UserItemLists& truth,
                              std::size_t k, std::size_t workers = 1);

// Same, visiting users in the given order.
MetricSummary evaluate_ranker(const Ranker& ranker, const UserItemLists& exclude, const UserItemLists& truth,
                              std::size_t k, std::span<const UserIndex> order);

struct EvalRow {
    std::string label;
    std::size_t k = 10;
    double precision = 0.0;
    double recall = 0.0;
    std::uint64_t seed = 0;
    double wall_ms = 0.0;
};

struct EvalReport {
    std::vector<EvalRow> rows;

    // Header `label,K,precision,recall,seed,wall_ms`, LF endings.
    void write_csv(std::ostream& os) const;
};

}  // namespace ckgr
