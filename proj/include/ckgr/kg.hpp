#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace ckgr {

enum class EntityId : std::uint32_t {};
enum class RelationId : std::uint32_t {};

inline constexpr std::size_t idx(EntityId e) noexcept { return static_cast<std::size_t>(e); }
inline constexpr std::size_t idx(RelationId r) noexcept { return static_cast<std::size_t>(r); }
inline constexpr EntityId entity_id(std::size_t i) noexcept { return static_cast<EntityId>(i); }
inline constexpr RelationId relation_id(std::size_t i) noexcept { return static_cast<RelationId>(i); }

// Marks a user or item with no entity in a given graph.
inline constexpr EntityId kNoEntity = static_cast<EntityId>(0xFFFFFFFFu);

using UserIndex = std::uint32_t;
using ItemIndex = std::uint32_t;

enum class IdOrder { FirstSeen, Sorted };

// Bidirectional string <-> dense id map. Ids are 0..size()-1 in insertion order.
class Vocabulary {
public:
    // Returns the existing id or appends a new one.
    std::uint32_t intern(std::string_view name);
    std::optional<std::uint32_t> find(std::string_view name) const;
    const std::string& name(std::uint32_t id) const;
    std::size_t size() const noexcept { return names_.size(); }
    std::span<const std::string> names() const noexcept { return names_; }

    static Vocabulary from_names(std::span<const std::string> names);

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.names_ == b.names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::uint32_t> index_;
};

// One source interaction: string ids plus a non-empty set of interaction types.
struct InteractionRecord {
    std::string user;
    std::string item;
    std::vector<std::string> types;  // sorted, unique
    std::optional<double> weight;
    std::optional<std::int64_t> timestamp;
    std::size_t line = 0;  // source line for diagnostics, 0 when synthetic

    friend bool operator==(const InteractionRecord&, const InteractionRecord&) = default;
};

// Sorts and deduplicates an interaction type set in place.
void normalize_types(std::vector<std::string>& types);

struct BipartiteEdge {
    UserIndex user;
    ItemIndex item;
    std::vector<std::string> types;

    friend bool operator==(const BipartiteEdge&, const BipartiteEdge&) = default;
};

struct BipartiteGraph {
    Vocabulary users;
    Vocabulary items;
    std::vector<BipartiteEdge> edges;

    std::size_t user_count() const noexcept { return users.size(); }
    std::size_t item_count() const noexcept { return items.size(); }
};

struct BipartiteOptions {
    IdOrder order = IdOrder::FirstSeen;
    // Optional pre-seeded vocabularies; ids not present are appended.
    const Vocabulary* users = nullptr;
    const Vocabulary* items = nullptr;
};

// Duplicate (user, item) records merge by union of their interaction types.
BipartiteGraph build_bipartite(std::span<const InteractionRecord> records, const BipartiteOptions& opts = {});

enum class RelationKind : std::uint8_t { Interaction, CompositeInteraction, UserAttribute, ItemAttribute };

struct RelationInfo {
    std::string name;
    RelationKind kind;
    std::vector<std::string> interaction_types;  // empty for attribute relations
};

// Per-graph relation vocabulary. Interaction relations are allocated lazily, one per
// distinct observed interaction-type set.
class RelationRegistry {
public:
    RelationId composite(std::vector<std::string> types);
    RelationId attribute(std::string_view name, RelationKind kind);

    std::optional<RelationId> find_composite(std::vector<std::string> types) const;
    const RelationInfo& info(RelationId r) const;
    std::size_t size() const noexcept { return relations_.size(); }
    std::span<const RelationInfo> relations() const noexcept { return relations_; }

private:
    std::vector<RelationInfo> relations_;
    std::map<std::vector<std::string>, RelationId> by_types_;
    std::unordered_map<std::string, RelationId> by_name_;
};

RelationId composite_relation(std::vector<std::string> types, RelationRegistry& registry);

struct Triple {
    EntityId head;
    RelationId relation;
    EntityId tail;

    friend bool operator==(const Triple&, const Triple&) = default;
};

struct TripleHash {
    std::size_t operator()(const Triple& t) const noexcept {
        std::uint64_t h = static_cast<std::uint64_t>(t.head) * 0x9E3779B97F4A7C15ULL;
        h ^= (static_cast<std::uint64_t>(t.relation) + 0x7F4A7C15ULL) * 0xBF58476D1CE4E5B9ULL;
        h ^= (static_cast<std::uint64_t>(t.tail) + (h << 6) + (h >> 2)) * 0x94D049BB133111EBULL;
        return static_cast<std::size_t>(h ^ (h >> 31));
    }
};

struct Neighbor {
    RelationId relation;
    EntityId tail;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

enum class EntityKind : std::uint8_t { User, Item, Attribute };

// Immutable triple store with a CSR neighbor index keyed by head entity.
class CollaborativeKG {
public:
    CollaborativeKG() = default;

    std::size_t entity_count() const noexcept { return entities_.size(); }
    std::size_t relation_count() const noexcept { return relations_.size(); }
    std::size_t triple_count() const noexcept { return triples_.size(); }

    // Triples in insertion order.
    std::span<const Triple> triples() const noexcept { return triples_; }
    // (relation, tail) pairs of head h in insertion order. Throws IndexError when out of range.
    std::span<const Neighbor> neighbors(EntityId h) const;
    // Position of h's first neighbor in the CSR arrays; neighbors(h)[j] is CSR slot offset(h)+j.
    std::size_t offset(EntityId h) const { return offsets_[idx(h)]; }
    std::span<const Neighbor> csr() const noexcept { return neighbors_; }
    std::span<const std::size_t> offsets() const noexcept { return offsets_; }

    bool contains(EntityId h, RelationId r, EntityId t) const;

    const Vocabulary& entities() const noexcept { return entities_; }
    const RelationRegistry& relations() const noexcept { return relations_; }
    EntityKind kind(EntityId e) const { return kinds_.at(idx(e)); }

    // Canonical text form: one `head<TAB>relation<TAB>tail` line per triple by name.
    void write_tsv(std::ostream& os) const;
    std::string serialize() const;

private:
    friend class CkgBuilder;

    Vocabulary entities_;
    std::vector<EntityKind> kinds_;
    RelationRegistry relations_;
    std::vector<Triple> triples_;
    std::vector<std::size_t> offsets_;  // entity_count + 1
    std::vector<Neighbor> neighbors_;
    std::unordered_set<Triple, TripleHash> membership_;
};

std::span<const Neighbor> neighbors(const CollaborativeKG& kg, EntityId h);

// Builds a CollaborativeKG incrementally; duplicate triples are dropped and counted.
class CkgBuilder {
public:
    EntityId add_entity(std::string_view name, EntityKind kind);
    std::optional<EntityId> find_entity(std::string_view name) const;
    RelationRegistry& relations() noexcept { return relations_; }
    // Returns false when the triple was already present.
    bool add_triple(EntityId h, RelationId r, EntityId t);
    CollaborativeKG build() &&;

private:
    Vocabulary entities_;
    std::vector<EntityKind> kinds_;
    RelationRegistry relations_;
    std::vector<Triple> triples_;
    std::unordered_set<Triple, TripleHash> seen_;
};

// Attribute triple by source names, e.g. (i1, genre, comedy).
struct AttributeTriple {
    std::string head;
    std::string relation;
    std::string tail;
    std::size_t line = 0;

    friend bool operator==(const AttributeTriple&, const AttributeTriple&) = default;
};

// Optional mapping from interaction ids to knowledge-graph entity names
// (item alignment and user alignment). Attribute files may name either form.
struct EntityAliases {
    std::unordered_map<std::string, std::string> items;
    std::unordered_map<std::string, std::string> users;
};

// Where each bipartite user and item lives inside one collaborative KG.
struct AlignmentMap {
    std::vector<EntityId> user_entity;
    std::vector<EntityId> item_entity;

    EntityId user(UserIndex u) const { return u < user_entity.size() ? user_entity[u] : kNoEntity; }
    EntityId item(ItemIndex i) const { return i < item_entity.size() ? item_entity[i] : kNoEntity; }

    friend bool operator==(const AlignmentMap&, const AlignmentMap&) = default;
};

struct BuildStats {
    std::size_t interaction_triples = 0;
    std::size_t attribute_triples = 0;
    std::size_t duplicate_attribute_triples = 0;
    std::size_t entities = 0;
    std::size_t relations = 0;
};

struct CkgBuild {
    CollaborativeKG kg;
    AlignmentMap alignment;
    BuildStats stats;
};

struct CkgOptions {
    IdOrder order = IdOrder::FirstSeen;
};

// User-side graph: user -[interaction]-> item, item -[attribute]-> value.
CkgBuild build_user_side_ckg(const BipartiteGraph& bg, std::span<const AttributeTriple> item_attrs,
                             const EntityAliases& aliases = {}, const CkgOptions& opts = {});

// Item-side graph: item -[interaction]-> user, user -[attribute]-> value.
CkgBuild build_item_side_ckg(const BipartiteGraph& bg, std::span<const AttributeTriple> user_attrs,
                             const EntityAliases& aliases = {}, const CkgOptions& opts = {});

}  // namespace ckgr
