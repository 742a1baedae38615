#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ckgr/kg.hpp"
#include "ckgr/numeric.hpp"

namespace ckgr {

struct RawRating {
    std::string user;
    std::string item;
    std::variant<double, std::string> value;  // numeric rating or interaction-type token
    std::optional<std::int64_t> timestamp;
    std::size_t line = 0;

    friend bool operator==(const RawRating&, const RawRating&) = default;
};

enum class InteractionFormat { Tsv, Csv };

// Picks CSV for a ".csv" extension, TSV otherwise.
InteractionFormat format_for(const std::filesystem::path& path);

struct ParseIssue {
    std::size_t line = 0;
    std::string message;
};

struct ParseReport {
    std::vector<ParseIssue> errors;
    bool ok() const noexcept { return errors.empty(); }
};

template <typename Row>
struct ParseResult {
    std::vector<Row> rows;
    ParseReport report;
};

// `user SEP item SEP value [SEP timestamp]`. Malformed lines land in the report; in strict
// mode the first one throws FormatError. A file that has malformed lines but no valid row
// also throws FormatError; an empty file yields zero rows and zero errors.
ParseResult<RawRating> parse_interactions(std::istream& in, InteractionFormat format, bool strict = false);
ParseResult<RawRating> parse_interactions(const std::filesystem::path& path, InteractionFormat format,
                                          bool strict = false);

// Writes ratings back in the parse format; doubles are printed with round-trip precision.
void write_interactions(std::ostream& out, const std::vector<RawRating>& ratings, InteractionFormat format);

// Numeric values >= threshold become type "rated"; tokens become their own types, with
// '|' separating several types on one line.
inline constexpr double kAnyRating = -std::numeric_limits<double>::infinity();
std::vector<InteractionRecord> to_implicit(const std::vector<RawRating>& ratings, double threshold = kAnyRating);

// Drops every user with fewer than n records. Single pass, no cascade.
std::vector<InteractionRecord> filter_min_interactions(const std::vector<InteractionRecord>& records, std::size_t n);

// `head TAB relation TAB tail`, '#' comment lines and blank lines skipped.
ParseResult<AttributeTriple> parse_attribute_triples(std::istream& in, bool strict = false);
ParseResult<AttributeTriple> parse_attribute_triples(const std::filesystem::path& path, bool strict = false);
void write_attribute_triples(std::ostream& out, const std::vector<AttributeTriple>& triples);

// Writes implicit records as `user TAB item TAB type1|type2`.
void write_implicit(std::ostream& out, const std::vector<InteractionRecord>& records);

struct DatasetCounts {
    std::size_t users = 0;
    std::size_t items = 0;
    std::size_t interactions = 0;

    friend bool operator==(const DatasetCounts&, const DatasetCounts&) = default;
};

DatasetCounts count_dataset(const std::vector<InteractionRecord>& records);

// Reads `users=<n>` / `items=<n>` / `interactions=<n>` lines. Missing keys stay unchecked.
struct CountManifest {
    std::optional<std::size_t> users;
    std::optional<std::size_t> items;
    std::optional<std::size_t> interactions;
};
CountManifest parse_count_manifest(std::istream& in);

// Throws FormatError listing every announced count that differs from `actual`.
void verify_counts(const CountManifest& announced, const DatasetCounts& actual);

struct SynthConfig {
    std::size_t n_users = 300;
    std::size_t n_items = 200;
    std::size_t latent_dim = 8;
    std::size_t interactions_per_user = 20;
    std::size_t attr_entities_per_factor = 3;
    double noise = 0.1;
    std::uint64_t seed = 42;

    void validate() const;  // ConfigError on zero counts or noise outside [0,1)
};

struct SynthData {
    std::vector<InteractionRecord> interactions;
    std::vector<AttributeTriple> user_attrs;
    std::vector<AttributeTriple> item_attrs;
    Matrix user_factors;  // n_users x latent_dim
    Matrix item_factors;  // n_items x latent_dim
    std::vector<std::size_t> user_block;  // dominant factor per user
    std::vector<std::size_t> item_block;  // factor block per item
};

// Items are split into latent_dim contiguous blocks; each item's factor vector is peaked at its
// block and each user's at a random dominant factor. With probability `noise` an interaction
// is drawn uniformly from the catalog, otherwise from the user's own block with probability
// proportional to softmax(affinity). A user never gets the same item twice. Every user and item
// links to `attr_entities_per_factor` attribute entities of its dominant factor.
SynthData synth_generate(const SynthConfig& cfg);

std::string synth_user_name(std::size_t u);
std::string synth_item_name(std::size_t i);

}  // namespace ckgr
