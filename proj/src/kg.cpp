#include "ckgr/kg.hpp"

#include <algorithm>
#include <ostream>
#include <sstream>
#include <tuple>

#include "ckgr/errors.hpp"

namespace ckgr {

std::uint32_t Vocabulary::intern(std::string_view name) {
    if (auto it = index_.find(std::string(name)); it != index_.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(names_.size());
    names_.emplace_back(name);
    index_.emplace(names_.back(), id);
    return id;
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view name) const {
    if (auto it = index_.find(std::string(name)); it != index_.end()) return it->second;
    return std::nullopt;
}

const std::string& Vocabulary::name(std::uint32_t id) const {
    if (id >= names_.size()) throw IndexError("vocabulary id " + std::to_string(id) + " out of range");
    return names_[id];
}

Vocabulary Vocabulary::from_names(std::span<const std::string> names) {
    Vocabulary v;
    for (const auto& n : names) v.intern(n);
    return v;
}

void normalize_types(std::vector<std::string>& types) {
    std::sort(types.begin(), types.end());
    types.erase(std::unique(types.begin(), types.end()), types.end());
}

namespace {

std::string record_location(const InteractionRecord& r, std::size_t position) {
    return r.line != 0 ? "line " + std::to_string(r.line) : "record " + std::to_string(position + 1);
}

std::vector<std::string> sorted_unique(std::vector<std::string> v) {
    normalize_types(v);
    return v;
}

std::string join(std::span<const std::string> parts, char sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

}  // namespace

BipartiteGraph build_bipartite(std::span<const InteractionRecord> records, const BipartiteOptions& opts) {
    BipartiteGraph g;
    if (opts.users) g.users = *opts.users;
    if (opts.items) g.items = *opts.items;

    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].types.empty()) {
            throw FormatError("interaction at " + record_location(records[i], i) + " has an empty interaction-type set");
        }
    }

    if (opts.order == IdOrder::Sorted) {
        std::vector<std::string> us, is;
        for (const auto& r : records) {
            if (!g.users.find(r.user)) us.push_back(r.user);
            if (!g.items.find(r.item)) is.push_back(r.item);
        }
        std::sort(us.begin(), us.end());
        std::sort(is.begin(), is.end());
        for (const auto& u : us) g.users.intern(u);
        for (const auto& it : is) g.items.intern(it);
    }

    std::unordered_map<std::uint64_t, std::size_t> edge_of;
    for (const auto& r : records) {
        const UserIndex u = g.users.intern(r.user);
        const ItemIndex it = g.items.intern(r.item);
        const std::uint64_t key = (static_cast<std::uint64_t>(u) << 32) | it;
        auto [pos, inserted] = edge_of.try_emplace(key, g.edges.size());
        if (inserted) {
            g.edges.push_back({u, it, sorted_unique(r.types)});
        } else {
            auto& types = g.edges[pos->second].types;
            types.insert(types.end(), r.types.begin(), r.types.end());
            normalize_types(types);
        }
    }
    return g;
}

RelationId RelationRegistry::composite(std::vector<std::string> types) {
    normalize_types(types);
    if (auto it = by_types_.find(types); it != by_types_.end()) return it->second;
    const auto id = relation_id(relations_.size());
    const auto kind = types.size() == 1 ? RelationKind::Interaction : RelationKind::CompositeInteraction;
    relations_.push_back({"interact:" + join(types, '+'), kind, types});
    by_types_.emplace(std::move(types), id);
    return id;
}

RelationId RelationRegistry::attribute(std::string_view name, RelationKind kind) {
    if (auto it = by_name_.find(std::string(name)); it != by_name_.end()) return it->second;
    const auto id = relation_id(relations_.size());
    relations_.push_back({std::string(name), kind, {}});
    by_name_.emplace(std::string(name), id);
    return id;
}

std::optional<RelationId> RelationRegistry::find_composite(std::vector<std::string> types) const {
    normalize_types(types);
    if (auto it = by_types_.find(types); it != by_types_.end()) return it->second;
    return std::nullopt;
}

const RelationInfo& RelationRegistry::info(RelationId r) const {
    if (idx(r) >= relations_.size()) throw IndexError("relation id " + std::to_string(idx(r)) + " out of range");
    return relations_[idx(r)];
}

RelationId composite_relation(std::vector<std::string> types, RelationRegistry& registry) {
    return registry.composite(std::move(types));
}

std::span<const Neighbor> CollaborativeKG::neighbors(EntityId h) const {
    if (idx(h) >= entity_count()) {
        throw IndexError("entity id " + std::to_string(idx(h)) + " out of range (" + std::to_string(entity_count()) +
                         " entities)");
    }
    const std::size_t b = offsets_[idx(h)];
    return {neighbors_.data() + b, offsets_[idx(h) + 1] - b};
}

bool CollaborativeKG::contains(EntityId h, RelationId r, EntityId t) const {
    return membership_.contains(Triple{h, r, t});
}

void CollaborativeKG::write_tsv(std::ostream& os) const {
    for (const auto& t : triples_) {
        os << entities_.name(static_cast<std::uint32_t>(idx(t.head))) << '\t' << relations_.info(t.relation).name << '\t'
           << entities_.name(static_cast<std::uint32_t>(idx(t.tail))) << '\n';
    }
}

std::string CollaborativeKG::serialize() const {
    std::ostringstream os;
    os << "entities\t" << entity_count() << '\n';
    for (std::size_t e = 0; e < entity_count(); ++e) {
        os << e << '\t' << static_cast<int>(kinds_[e]) << '\t' << entities_.name(static_cast<std::uint32_t>(e)) << '\n';
    }
    os << "relations\t" << relation_count() << '\n';
    for (std::size_t r = 0; r < relation_count(); ++r) {
        const auto& info = relations_.info(relation_id(r));
        os << r << '\t' << static_cast<int>(info.kind) << '\t' << info.name << '\n';
    }
    os << "triples\t" << triple_count() << '\n';
    for (const auto& t : triples_) os << idx(t.head) << '\t' << idx(t.relation) << '\t' << idx(t.tail) << '\n';
    return os.str();
}

std::span<const Neighbor> neighbors(const CollaborativeKG& kg, EntityId h) { return kg.neighbors(h); }

EntityId CkgBuilder::add_entity(std::string_view name, EntityKind kind) {
    const auto before = entities_.size();
    const auto id = entities_.intern(name);
    if (entities_.size() != before) kinds_.push_back(kind);
    return entity_id(id);
}

std::optional<EntityId> CkgBuilder::find_entity(std::string_view name) const {
    if (auto id = entities_.find(name)) return entity_id(*id);
    return std::nullopt;
}

bool CkgBuilder::add_triple(EntityId h, RelationId r, EntityId t) {
    if (idx(h) >= entities_.size() || idx(t) >= entities_.size()) throw IndexError("triple endpoint out of range");
    if (idx(r) >= relations_.size()) throw IndexError("triple relation out of range");
    if (!seen_.insert(Triple{h, r, t}).second) return false;
    triples_.push_back({h, r, t});
    return true;
}

CollaborativeKG CkgBuilder::build() && {
    CollaborativeKG kg;
    const std::size_t n = entities_.size();
    kg.offsets_.assign(n + 1, 0);
    for (const auto& t : triples_) ++kg.offsets_[idx(t.head) + 1];
    for (std::size_t i = 0; i < n; ++i) kg.offsets_[i + 1] += kg.offsets_[i];
    kg.neighbors_.resize(triples_.size());
    std::vector<std::size_t> cursor(kg.offsets_.begin(), kg.offsets_.end() - 1);
    for (const auto& t : triples_) kg.neighbors_[cursor[idx(t.head)]++] = {t.relation, t.tail};

    kg.entities_ = std::move(entities_);
    kg.kinds_ = std::move(kinds_);
    kg.relations_ = std::move(relations_);
    kg.triples_ = std::move(triples_);
    kg.membership_ = std::move(seen_);
    return kg;
}

namespace {

enum class Side { User, Item };

// Shared construction for both collaborative graphs. For the user side the interaction
// heads are users, tails items, and attribute heads items; the item side mirrors it.
CkgBuild build_side(const BipartiteGraph& bg, std::span<const AttributeTriple> attrs, const EntityAliases& aliases,
                    const CkgOptions& opts, Side side) {
    CkgBuilder b;
    CkgBuild out;
    out.alignment.user_entity.assign(bg.user_count(), kNoEntity);
    out.alignment.item_entity.assign(bg.item_count(), kNoEntity);

    auto entity_name = [](const std::unordered_map<std::string, std::string>& alias, const std::string& prefix,
                          const std::string& id) {
        if (auto it = alias.find(id); it != alias.end()) return it->second;
        return prefix + id;
    };

    auto add_users = [&] {
        for (UserIndex u = 0; u < bg.user_count(); ++u) {
            out.alignment.user_entity[u] = b.add_entity(entity_name(aliases.users, "user:", bg.users.name(u)), EntityKind::User);
        }
    };
    auto add_items = [&] {
        for (ItemIndex i = 0; i < bg.item_count(); ++i) {
            out.alignment.item_entity[i] = b.add_entity(entity_name(aliases.items, "item:", bg.items.name(i)), EntityKind::Item);
        }
    };
    if (side == Side::User) {
        add_users();
        add_items();
    } else {
        add_items();
        add_users();
    }

    for (const auto& e : bg.edges) {
        const RelationId r = composite_relation(e.types, b.relations());
        const EntityId u = out.alignment.user_entity[e.user];
        const EntityId i = out.alignment.item_entity[e.item];
        if (side == Side::User) {
            b.add_triple(u, r, i);
        } else {
            b.add_triple(i, r, u);
        }
        ++out.stats.interaction_triples;
    }

    // Attribute heads resolve through the alias map first, then by raw id.
    const auto& head_vocab = side == Side::User ? bg.items : bg.users;
    const auto& head_aliases = side == Side::User ? aliases.items : aliases.users;
    const auto& head_entities = side == Side::User ? out.alignment.item_entity : out.alignment.user_entity;
    std::unordered_map<std::string, EntityId> alias_to_entity;
    for (std::uint32_t h = 0; h < head_vocab.size(); ++h) {
        if (auto it = head_aliases.find(head_vocab.name(h)); it != head_aliases.end()) {
            alias_to_entity.emplace(it->second, head_entities[h]);
        }
    }
    auto resolve_head = [&](const std::string& name) -> std::optional<EntityId> {
        if (auto it = alias_to_entity.find(name); it != alias_to_entity.end()) return it->second;
        if (auto h = head_vocab.find(name)) return head_entities[*h];
        return std::nullopt;
    };

    std::vector<std::string> unresolved;
    for (const auto& a : attrs) {
        if (!resolve_head(a.head)) {
            std::string where = a.head;
            if (a.line) where += " (line " + std::to_string(a.line) + ")";
            unresolved.push_back(std::move(where));
        }
    }
    if (!unresolved.empty()) {
        std::string msg = std::string(side == Side::User ? "item" : "user") + " attribute triples reference unknown heads: ";
        for (std::size_t i = 0; i < unresolved.size(); ++i) {
            if (i) msg += ", ";
            if (i == 20) {
                msg += "... (" + std::to_string(unresolved.size()) + " total)";
                break;
            }
            msg += unresolved[i];
        }
        throw UnresolvedEntityError(msg);
    }

    std::vector<std::size_t> order(attrs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (opts.order == IdOrder::Sorted) {
        std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
            return std::tie(attrs[x].relation, attrs[x].tail) < std::tie(attrs[y].relation, attrs[y].tail);
        });
    }
    // Interned in (possibly sorted) order so that ids are assigned before insertion below.
    const RelationKind kind = side == Side::User ? RelationKind::ItemAttribute : RelationKind::UserAttribute;
    for (std::size_t k : order) {
        b.relations().attribute(attrs[k].relation, kind);
        if (!alias_to_entity.contains(attrs[k].tail)) b.add_entity("attr:" + attrs[k].tail, EntityKind::Attribute);
    }
    for (const auto& a : attrs) {
        const EntityId h = *resolve_head(a.head);
        const RelationId r = b.relations().attribute(a.relation, kind);
        EntityId t;
        if (auto it = alias_to_entity.find(a.tail); it != alias_to_entity.end()) {
            t = it->second;
        } else {
            t = *b.find_entity("attr:" + a.tail);
        }
        if (b.add_triple(h, r, t)) {
            ++out.stats.attribute_triples;
        } else {
            ++out.stats.duplicate_attribute_triples;
        }
    }

    out.kg = std::move(b).build();
    out.stats.entities = out.kg.entity_count();
    out.stats.relations = out.kg.relation_count();
    return out;
}

}  // namespace

CkgBuild build_user_side_ckg(const BipartiteGraph& bg, std::span<const AttributeTriple> item_attrs,
                             const EntityAliases& aliases, const CkgOptions& opts) {
    return build_side(bg, item_attrs, aliases, opts, Side::User);
}

CkgBuild build_item_side_ckg(const BipartiteGraph& bg, std::span<const AttributeTriple> user_attrs,
                             const EntityAliases& aliases, const CkgOptions& opts) {
    return build_side(bg, user_attrs, aliases, opts, Side::Item);
}

}  // namespace ckgr
