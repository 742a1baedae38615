#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ckgr/eval.hpp"
#include "ckgr/kg.hpp"

namespace ckgr {

struct DatasetInputs {
    std::vector<InteractionRecord> interactions;
    std::vector<AttributeTriple> user_attrs;
    std::vector<AttributeTriple> item_attrs;
    EntityAliases aliases;
};

// Everything the trainer and evaluator need: the vocabulary spans all interactions,
// while graph edges come from the training split only.
struct PreparedDataset {
    Split split;
    BipartiteGraph train_graph;
    CkgBuild user_side;
    CkgBuild item_side;
    UserItemLists train_items;
    UserItemLists validation_items;
    UserItemLists test_items;
    // Attribute triples whose head never appears in the interactions (dropped unless strict).
    std::size_t dropped_user_attrs = 0;
    std::size_t dropped_item_attrs = 0;

    std::size_t user_count() const noexcept { return train_graph.user_count(); }
    std::size_t item_count() const noexcept { return train_graph.item_count(); }
};

// With `strict_attributes` an attribute head that matches no interacting user/item raises
// UnresolvedEntityError; otherwise such triples are dropped and counted.
PreparedDataset prepare_dataset(const DatasetInputs& inputs, std::array<double, 3> ratios, std::uint64_t seed,
                                IdOrder order = IdOrder::FirstSeen, bool strict_attributes = false);

// Groups records into sorted per-user item lists under the given vocabularies.
UserItemLists group_items(std::span<const InteractionRecord> records, const Vocabulary& users, const Vocabulary& items);

}  // namespace ckgr
