#include "ckgr/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string_view>
#include <unordered_map>

#include "ckgr/errors.hpp"

namespace ckgr {

namespace {

std::string_view trim(std::string_view s) {
    const auto* ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::optional<double> parse_double(std::string_view s) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
    std::int64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

std::string format_double(double v) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, p);
}

template <typename Row>
void record_issue(ParseResult<Row>& res, std::size_t line, std::string msg, bool strict) {
    if (strict) throw FormatError("line " + std::to_string(line) + ": " + msg);
    res.report.errors.push_back({line, std::move(msg)});
}

template <typename Row>
void finish(const ParseResult<Row>& res, const char* what) {
    if (res.rows.empty() && !res.report.errors.empty()) {
        throw FormatError(std::string("no valid ") + what + " rows; first error at line " +
                          std::to_string(res.report.errors.front().line) + ": " + res.report.errors.front().message);
    }
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    return in;
}

}  // namespace

InteractionFormat format_for(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".csv" ? InteractionFormat::Csv : InteractionFormat::Tsv;
}

ParseResult<RawRating> parse_interactions(std::istream& in, InteractionFormat format, bool strict) {
    const char sep = format == InteractionFormat::Csv ? ',' : '\t';
    ParseResult<RawRating> res;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto body = trim(line);
        if (body.empty()) continue;
        const auto fields = split(body, sep);
        if (fields.size() < 3 || fields.size() > 4) {
            record_issue(res, lineno, "expected 3 or 4 fields, got " + std::to_string(fields.size()), strict);
            continue;
        }
        RawRating r;
        r.user = std::string(trim(fields[0]));
        r.item = std::string(trim(fields[1]));
        r.line = lineno;
        if (r.user.empty() || r.item.empty()) {
            record_issue(res, lineno, "empty user or item id", strict);
            continue;
        }
        const auto value = trim(fields[2]);
        if (value.empty()) {
            record_issue(res, lineno, "empty value", strict);
            continue;
        }
        if (auto v = parse_double(value)) {
            if (!std::isfinite(*v)) {
                record_issue(res, lineno, "non-finite rating", strict);
                continue;
            }
            r.value = *v;
        } else {
            r.value = std::string(value);
        }
        if (fields.size() == 4) {
            const auto ts = parse_int(trim(fields[3]));
            if (!ts) {
                record_issue(res, lineno, "timestamp is not an integer", strict);
                continue;
            }
            r.timestamp = *ts;
        }
        res.rows.push_back(std::move(r));
    }
    finish(res, "interaction");
    return res;
}

ParseResult<RawRating> parse_interactions(const std::filesystem::path& path, InteractionFormat format, bool strict) {
    auto in = open_input(path);
    return parse_interactions(in, format, strict);
}

void write_interactions(std::ostream& out, const std::vector<RawRating>& ratings, InteractionFormat format) {
    const char sep = format == InteractionFormat::Csv ? ',' : '\t';
    for (const auto& r : ratings) {
        out << r.user << sep << r.item << sep;
        if (const auto* d = std::get_if<double>(&r.value)) {
            out << format_double(*d);
        } else {
            out << std::get<std::string>(r.value);
        }
        if (r.timestamp) out << sep << *r.timestamp;
        out << '\n';
    }
}

std::vector<InteractionRecord> to_implicit(const std::vector<RawRating>& ratings, double threshold) {
    std::vector<InteractionRecord> out;
    out.reserve(ratings.size());
    for (const auto& r : ratings) {
        InteractionRecord rec{r.user, r.item, {}, std::nullopt, r.timestamp, r.line};
        if (const auto* d = std::get_if<double>(&r.value)) {
            if (*d < threshold) continue;
            rec.types = {"rated"};
            rec.weight = *d;
        } else {
            for (auto t : split(std::get<std::string>(r.value), '|')) {
                t = trim(t);
                if (!t.empty()) rec.types.emplace_back(t);
            }
            if (rec.types.empty()) continue;
            normalize_types(rec.types);
        }
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<InteractionRecord> filter_min_interactions(const std::vector<InteractionRecord>& records, std::size_t n) {
    if (n == 0) return records;
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& r : records) ++counts[r.user];
    std::vector<InteractionRecord> out;
    for (const auto& r : records) {
        if (counts[r.user] >= n) out.push_back(r);
    }
    return out;
}

ParseResult<AttributeTriple> parse_attribute_triples(std::istream& in, bool strict) {
    ParseResult<AttributeTriple> res;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto body = trim(line);
        if (body.empty() || body.front() == '#') continue;
        const auto fields = split(body, '\t');
        if (fields.size() != 3) {
            record_issue(res, lineno, "expected head<TAB>relation<TAB>tail, got " + std::to_string(fields.size()) +
                                          " fields",
                         strict);
            continue;
        }
        AttributeTriple t{std::string(trim(fields[0])), std::string(trim(fields[1])), std::string(trim(fields[2])),
                          lineno};
        if (t.head.empty() || t.relation.empty() || t.tail.empty()) {
            record_issue(res, lineno, "empty head, relation or tail", strict);
            continue;
        }
        res.rows.push_back(std::move(t));
    }
    finish(res, "attribute");
    return res;
}

ParseResult<AttributeTriple> parse_attribute_triples(const std::filesystem::path& path, bool strict) {
    auto in = open_input(path);
    return parse_attribute_triples(in, strict);
}

void write_attribute_triples(std::ostream& out, const std::vector<AttributeTriple>& triples) {
    for (const auto& t : triples) out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
}

void write_implicit(std::ostream& out, const std::vector<InteractionRecord>& records) {
    for (const auto& r : records) {
        out << r.user << '\t' << r.item << '\t';
        for (std::size_t i = 0; i < r.types.size(); ++i) out << (i ? "|" : "") << r.types[i];
        if (r.timestamp) out << '\t' << *r.timestamp;
        out << '\n';
    }
}

DatasetCounts count_dataset(const std::vector<InteractionRecord>& records) {
    const auto g = build_bipartite(records, {});
    return {g.user_count(), g.item_count(), g.edges.size()};
}

CountManifest parse_count_manifest(std::istream& in) {
    CountManifest m;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto body = trim(line);
        if (body.empty() || body.front() == '#') continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos) throw FormatError("manifest line " + std::to_string(lineno) + ": missing '='");
        const auto key = trim(body.substr(0, eq));
        const auto val = parse_int(trim(body.substr(eq + 1)));
        if (!val || *val < 0) {
            throw FormatError("manifest line " + std::to_string(lineno) + ": count must be a non-negative integer");
        }
        const auto n = static_cast<std::size_t>(*val);
        if (key == "users") {
            m.users = n;
        } else if (key == "items") {
            m.items = n;
        } else if (key == "interactions") {
            m.interactions = n;
        } else {
            throw FormatError("manifest line " + std::to_string(lineno) + ": unknown key '" + std::string(key) + "'");
        }
    }
    return m;
}

void verify_counts(const CountManifest& announced, const DatasetCounts& actual) {
    std::string diffs;
    auto check = [&](const char* name, const std::optional<std::size_t>& want, std::size_t got) {
        if (want && *want != got) {
            if (!diffs.empty()) diffs += "; ";
            diffs += std::string(name) + " announced " + std::to_string(*want) + ", parsed " + std::to_string(got);
        }
    };
    check("users", announced.users, actual.users);
    check("items", announced.items, actual.items);
    check("interactions", announced.interactions, actual.interactions);
    if (!diffs.empty()) throw FormatError("dataset counts disagree with manifest: " + diffs);
}

void SynthConfig::validate() const {
    if (n_users == 0 || n_items == 0 || latent_dim == 0 || interactions_per_user == 0 ||
        attr_entities_per_factor == 0) {
        throw ConfigError("synth counts must be positive");
    }
    if (!(noise >= 0.0 && noise < 1.0)) throw ConfigError("synth noise must be in [0,1)");
    if (latent_dim > n_items) throw ConfigError("synth latent_dim cannot exceed n_items");
    if (interactions_per_user > n_items) throw ConfigError("synth interactions_per_user cannot exceed n_items");
}

std::string synth_user_name(std::size_t u) { return "u" + std::to_string(u); }
std::string synth_item_name(std::size_t i) { return "i" + std::to_string(i); }

SynthData synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    const std::size_t F = cfg.latent_dim;
    Rng rng(cfg.seed, 7);
    SynthData out;
    out.user_factors = Matrix(cfg.n_users, F);
    out.item_factors = Matrix(cfg.n_items, F);

    // Contiguous item blocks, sizes differing by at most one.
    std::vector<std::size_t> block_begin(F + 1);
    for (std::size_t f = 0; f <= F; ++f) block_begin[f] = f * cfg.n_items / F;
    out.item_block.resize(cfg.n_items);
    for (std::size_t f = 0; f < F; ++f) {
        for (std::size_t i = block_begin[f]; i < block_begin[f + 1]; ++i) out.item_block[i] = f;
    }
    for (std::size_t i = 0; i < cfg.n_items; ++i) {
        auto row = out.item_factors.row(i);
        for (auto& x : row) x = 0.3 * rng.normal();
        row[out.item_block[i]] += 1.0;
    }
    out.user_block.resize(cfg.n_users);
    for (std::size_t u = 0; u < cfg.n_users; ++u) {
        out.user_block[u] = rng.below(F);
        auto row = out.user_factors.row(u);
        for (auto& x : row) x = 0.3 * rng.normal();
        row[out.user_block[u]] += 1.0;
    }

    std::vector<char> taken(cfg.n_items);
    std::vector<double> w;
    for (std::size_t u = 0; u < cfg.n_users; ++u) {
        std::fill(taken.begin(), taken.end(), 0);
        const std::size_t f = out.user_block[u];
        const std::size_t lo = block_begin[f], hi = block_begin[f + 1];
        std::size_t in_block_left = hi - lo;
        std::size_t left_total = cfg.n_items;
        for (std::size_t n = 0; n < cfg.interactions_per_user; ++n) {
            std::size_t item = 0;
            const bool uniform = rng.uniform() < cfg.noise || in_block_left == 0;
            if (uniform) {
                // Uniform over untaken items.
                std::size_t pick = rng.below(left_total);
                for (item = 0; item < cfg.n_items; ++item) {
                    if (taken[item]) continue;
                    if (pick-- == 0) break;
                }
            } else {
                w.assign(hi - lo, 0.0);
                double mx = -std::numeric_limits<double>::infinity();
                for (std::size_t i = lo; i < hi; ++i) {
                    if (taken[i]) continue;
                    w[i - lo] = 3.0 * dot(out.user_factors.row(u), out.item_factors.row(i));
                    mx = std::max(mx, w[i - lo]);
                }
                double z = 0.0;
                for (std::size_t i = lo; i < hi; ++i) {
                    w[i - lo] = taken[i] ? 0.0 : std::exp(w[i - lo] - mx);
                    z += w[i - lo];
                }
                double r = rng.uniform() * z;
                item = hi;
                for (std::size_t i = lo; i < hi; ++i) {
                    if (taken[i]) continue;
                    item = i;
                    r -= w[i - lo];
                    if (r < 0.0) break;
                }
            }
            taken[item] = 1;
            --left_total;
            if (item >= lo && item < hi) --in_block_left;
            InteractionRecord rec{synth_user_name(u), synth_item_name(item), {"view"}, std::nullopt, std::nullopt, 0};
            if (rng.uniform() < 0.25) rec.types.push_back("like");
            normalize_types(rec.types);
            out.interactions.push_back(std::move(rec));
        }
    }

    auto attrs = [&](std::size_t count, const std::vector<std::size_t>& block, const char* relation, auto name,
                     std::vector<AttributeTriple>& dst) {
        for (std::size_t e = 0; e < count; ++e) {
            for (std::size_t a = 0; a < cfg.attr_entities_per_factor; ++a) {
                std::size_t f = block[e];
                if (rng.uniform() < cfg.noise) f = rng.below(F);
                dst.push_back({name(e), relation, "topic_" + std::to_string(f) + "_" + std::to_string(a), 0});
            }
        }
    };
    attrs(cfg.n_users, out.user_block, "user_topic", synth_user_name, out.user_attrs);
    attrs(cfg.n_items, out.item_block, "item_topic", synth_item_name, out.item_attrs);
    return out;
}

}  // namespace ckgr
