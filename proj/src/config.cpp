#include "ckgr/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <string_view>

#include "ckgr/errors.hpp"

namespace ckgr {

namespace {

const std::vector<std::pair<std::string, std::string>>& defaults() {
    static const std::vector<std::pair<std::string, std::string>> table = {
        {"seed", "42"},
        {"data.interactions", ""},
        {"data.format", "auto"},
        {"data.user_attrs", ""},
        {"data.item_attrs", ""},
        {"data.manifest", ""},
        {"data.threshold", "none"},
        {"data.min_interactions", "0"},
        {"data.strict", "false"},
        {"split.ratios", "0.8,0.1,0.1"},
        {"kg.id_order", "first_seen"},
        {"kg.corrupt_heads", "false"},
        {"model.d", "64"},
        {"model.k", "64"},
        {"model.layers", "2"},
        {"model.layer_dims", "32,16"},
        {"model.init_std", "0.1"},
        {"model.slope", "0.2"},
        {"model.attention", "relation"},
        {"aggregator.shared_weights", "true"},
        {"train.lr", "0.001"},
        {"train.lambda", "1e-5"},
        {"train.kg_batch", "1024"},
        {"train.cf_batch", "1024"},
        {"train.epochs", "100"},
        {"train.patience", "10"},
        {"train.workers", "1"},
        {"eval.k", "10"},
    };
    return table;
}

std::string trim(std::string_view s) {
    const auto* ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_commas(const std::string& text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(',', start);
        out.push_back(trim(std::string_view(text).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace

double parse_real(const std::string& key, const std::string& text) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc{} || p != text.data() + text.size() || !std::isfinite(v)) {
        throw ConfigError("config key '" + key + "': '" + text + "' is not a finite number");
    }
    return v;
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& text) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc{} || p != text.data() + text.size()) {
        throw ConfigError("config key '" + key + "': '" + text + "' is not a non-negative integer");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw ConfigError("config key '" + key + "': expected true or false, got '" + text + "'");
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& text) {
    std::vector<std::size_t> out;
    for (const auto& part : split_commas(text)) out.push_back(parse_unsigned(key, part));
    return out;
}

std::vector<double> parse_real_list(const std::string& key, const std::string& text) {
    std::vector<double> out;
    for (const auto& part : split_commas(text)) out.push_back(parse_real(key, part));
    return out;
}

RunConfig::RunConfig() {
    for (const auto& [k, v] : defaults()) values_[k] = v;
}

const std::vector<std::string>& RunConfig::known_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& kv : defaults()) k.push_back(kv.first);
        return k;
    }();
    return keys;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) {
        throw ConfigError("unknown config key '" + key + "' (see README for the list of keys)");
    }
    it->second = value;
    explicit_.insert(key);
}

void RunConfig::set_assignment(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
    set(trim(std::string_view(assignment).substr(0, eq)), trim(std::string_view(assignment).substr(eq + 1)));
}

void RunConfig::load(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        const std::string body = trim(std::string_view(line).substr(0, hash));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        try {
            set(trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void RunConfig::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file " + path.string());
    load(in, path.string());
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

void RunConfig::apply_seed_env(const char* env_value) {
    if (is_set("seed") || env_value == nullptr || *env_value == '\0') return;
    parse_unsigned("CKGR_SEED", env_value);
    values_["seed"] = env_value;
}

std::uint64_t RunConfig::seed() const { return parse_unsigned("seed", get("seed")); }

Hyperparameters RunConfig::hyperparameters() const {
    Hyperparameters hp;
    hp.entity_dim = parse_unsigned("model.d", get("model.d"));
    hp.relation_dim = parse_unsigned("model.k", get("model.k"));
    hp.layers = parse_unsigned("model.layers", get("model.layers"));
    hp.layer_dims = parse_size_list("model.layer_dims", get("model.layer_dims"));
    hp.init_std = parse_real("model.init_std", get("model.init_std"));
    hp.slope = parse_real("model.slope", get("model.slope"));
    const auto& att = get("model.attention");
    if (att == "relation") {
        hp.attention = AttentionForm::Relation;
    } else if (att == "printed") {
        hp.attention = AttentionForm::Printed;
    } else {
        throw ConfigError("config key 'model.attention': expected relation or printed, got '" + att + "'");
    }
    hp.shared_weights = parse_bool("aggregator.shared_weights", get("aggregator.shared_weights"));
    hp.corrupt_heads = parse_bool("kg.corrupt_heads", get("kg.corrupt_heads"));
    hp.learning_rate = parse_real("train.lr", get("train.lr"));
    hp.lambda = parse_real("train.lambda", get("train.lambda"));
    hp.kg_batch = parse_unsigned("train.kg_batch", get("train.kg_batch"));
    hp.cf_batch = parse_unsigned("train.cf_batch", get("train.cf_batch"));
    hp.epochs = parse_unsigned("train.epochs", get("train.epochs"));
    hp.patience = parse_unsigned("train.patience", get("train.patience"));
    hp.workers = parse_unsigned("train.workers", get("train.workers"));
    hp.eval_k = parse_unsigned("eval.k", get("eval.k"));
    hp.seed = seed();

    auto positive = [](const char* key, double v) {
        if (!(v > 0.0)) throw ConfigError(std::string("config key '") + key + "' must be positive");
    };
    if (hp.entity_dim == 0) throw ConfigError("config key 'model.d' must be positive");
    if (hp.relation_dim == 0) throw ConfigError("config key 'model.k' must be positive");
    if (hp.layers == 0) throw ConfigError("config key 'model.layers' must be at least 1");
    for (auto d : hp.layer_dims) {
        if (d == 0) throw ConfigError("config key 'model.layer_dims' entries must be positive");
    }
    positive("model.init_std", hp.init_std);
    positive("train.lr", hp.learning_rate);
    if (hp.lambda < 0.0) throw ConfigError("config key 'train.lambda' must be non-negative");
    if (hp.slope < 0.0) throw ConfigError("config key 'model.slope' must be non-negative");
    if (hp.kg_batch == 0) throw ConfigError("config key 'train.kg_batch' must be positive");
    if (hp.cf_batch == 0) throw ConfigError("config key 'train.cf_batch' must be positive");
    if (hp.eval_k == 0) throw ConfigError("config key 'eval.k' must be at least 1");
    if (hp.workers == 0) throw ConfigError("config key 'train.workers' must be at least 1");
    if (hp.attention == AttentionForm::Printed && hp.entity_dim != hp.relation_dim) {
        throw ConfigError("model.attention = printed requires model.d == model.k");
    }
    return hp;
}

std::array<double, 3> RunConfig::split_ratios() const {
    const auto r = parse_real_list("split.ratios", get("split.ratios"));
    if (r.size() != 3) throw ConfigError("config key 'split.ratios' needs three values train,validation,test");
    for (double v : r) {
        if (v < 0.0) throw ConfigError("config key 'split.ratios' entries must be non-negative");
    }
    return {r[0], r[1], r[2]};
}

IdOrder RunConfig::id_order() const {
    const auto& v = get("kg.id_order");
    if (v == "first_seen") return IdOrder::FirstSeen;
    if (v == "sorted") return IdOrder::Sorted;
    throw ConfigError("config key 'kg.id_order': expected first_seen or sorted, got '" + v + "'");
}

double RunConfig::implicit_threshold() const {
    const auto& v = get("data.threshold");
    if (v == "none" || v.empty()) return -std::numeric_limits<double>::infinity();
    return parse_real("data.threshold", v);
}

std::size_t RunConfig::min_interactions() const {
    return parse_unsigned("data.min_interactions", get("data.min_interactions"));
}

bool RunConfig::strict_parse() const { return parse_bool("data.strict", get("data.strict")); }

std::string RunConfig::path(const std::string& key) const { return get(key); }

void RunConfig::validate() const {
    hyperparameters();
    split_ratios();
    id_order();
    implicit_threshold();
    min_interactions();
    strict_parse();
    const auto& fmt = get("data.format");
    if (fmt != "auto" && fmt != "tsv" && fmt != "csv") {
        throw ConfigError("config key 'data.format': expected auto, tsv or csv, got '" + fmt + "'");
    }
}

}  // namespace ckgr
