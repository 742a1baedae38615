#include "ckgr/dataset.hpp"

#include <algorithm>
#include <unordered_set>

namespace ckgr {

UserItemLists group_items(std::span<const InteractionRecord> records, const Vocabulary& users, const Vocabulary& items) {
    UserItemLists lists(users.size());
    for (const auto& r : records) {
        const auto u = users.find(r.user);
        const auto i = items.find(r.item);
        if (!u || !i) continue;
        lists[*u].push_back(*i);
    }
    for (auto& l : lists) {
        std::sort(l.begin(), l.end());
        l.erase(std::unique(l.begin(), l.end()), l.end());
    }
    return lists;
}

namespace {

std::vector<AttributeTriple> known_heads(std::span<const AttributeTriple> attrs, const Vocabulary& vocab,
                                         const std::unordered_map<std::string, std::string>& aliases,
                                         std::size_t& dropped) {
    std::unordered_set<std::string> known;
    for (const auto& name : vocab.names()) {
        known.insert(name);
        if (auto it = aliases.find(name); it != aliases.end()) known.insert(it->second);
    }
    std::vector<AttributeTriple> out;
    out.reserve(attrs.size());
    for (const auto& a : attrs) {
        if (known.count(a.head)) {
            out.push_back(a);
        } else {
            ++dropped;
        }
    }
    return out;
}

}  // namespace

PreparedDataset prepare_dataset(const DatasetInputs& inputs, std::array<double, 3> ratios, std::uint64_t seed,
                                IdOrder order, bool strict_attributes) {
    PreparedDataset d;
    const BipartiteGraph full = build_bipartite(inputs.interactions, {.order = order});

    // Split merged (user, item) pairs so a pair never lands on both sides of the split.
    std::vector<InteractionRecord> merged;
    merged.reserve(full.edges.size());
    for (const auto& e : full.edges) {
        merged.push_back({full.users.name(e.user), full.items.name(e.item), e.types, std::nullopt, std::nullopt, 0});
    }
    d.split = split_dataset(merged, ratios, seed);
    d.train_graph = build_bipartite(d.split.train, {.order = order, .users = &full.users, .items = &full.items});
    if (strict_attributes) {
        d.user_side = build_user_side_ckg(d.train_graph, inputs.item_attrs, inputs.aliases, {.order = order});
        d.item_side = build_item_side_ckg(d.train_graph, inputs.user_attrs, inputs.aliases, {.order = order});
    } else {
        const auto item_attrs = known_heads(inputs.item_attrs, full.items, inputs.aliases.items, d.dropped_item_attrs);
        const auto user_attrs = known_heads(inputs.user_attrs, full.users, inputs.aliases.users, d.dropped_user_attrs);
        d.user_side = build_user_side_ckg(d.train_graph, item_attrs, inputs.aliases, {.order = order});
        d.item_side = build_item_side_ckg(d.train_graph, user_attrs, inputs.aliases, {.order = order});
    }
    d.train_items = group_items(d.split.train, full.users, full.items);
    d.validation_items = group_items(d.split.validation, full.users, full.items);
    d.test_items = group_items(d.split.test, full.users, full.items);
    return d;
}

}  // namespace ckgr
