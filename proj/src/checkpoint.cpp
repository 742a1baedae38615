#include "ckgr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "json.hpp"

namespace ckgr {

namespace {

using nlohmann::json;

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void u32(std::uint64_t v) {
        if (v > 0xFFFFFFFFull) throw ConfigError("checkpoint field exceeds 32 bits");
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(std::span<const double> values) {
        for (double d : values) u64(std::bit_cast<std::uint64_t>(d));
    }
    std::vector<std::uint8_t> take() && { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return in_.size() - pos_; }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n) {
            throw FormatError("checkpoint truncated at byte offset " + std::to_string(pos_) + " while reading " + what +
                              " (need " + std::to_string(n) + " bytes, " + std::to_string(remaining()) + " left)");
        }
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    void f64(std::span<double> values, const char* what) {
        need(values.size() * 8, what);
        for (double& d : values) d = std::bit_cast<double>(u64(what));
    }
    std::span<const std::uint8_t> bytes(std::size_t n, const char* what) {
        need(n, what);
        auto s = in_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

std::string attention_name(AttentionForm f) { return f == AttentionForm::Relation ? "relation" : "printed"; }

json hyper_to_json(const Hyperparameters& hp) {
    return json{{"entity_dim", hp.entity_dim},   {"relation_dim", hp.relation_dim},
                {"layers", hp.layers},           {"layer_dims", hp.layer_dims},
                {"learning_rate", hp.learning_rate}, {"lambda", hp.lambda},
                {"init_std", hp.init_std},       {"slope", hp.slope},
                {"kg_batch", hp.kg_batch},       {"cf_batch", hp.cf_batch},
                {"epochs", hp.epochs},           {"patience", hp.patience},
                {"eval_k", hp.eval_k},           {"seed", hp.seed},
                {"shared_weights", hp.shared_weights}, {"attention", attention_name(hp.attention)},
                {"corrupt_heads", hp.corrupt_heads},   {"workers", hp.workers}};
}

Hyperparameters hyper_from_json(const json& j) {
    Hyperparameters hp;
    hp.entity_dim = j.at("entity_dim").get<std::size_t>();
    hp.relation_dim = j.at("relation_dim").get<std::size_t>();
    hp.layers = j.at("layers").get<std::size_t>();
    hp.layer_dims = j.at("layer_dims").get<std::vector<std::size_t>>();
    hp.learning_rate = j.at("learning_rate").get<double>();
    hp.lambda = j.at("lambda").get<double>();
    hp.init_std = j.at("init_std").get<double>();
    hp.slope = j.at("slope").get<double>();
    hp.kg_batch = j.at("kg_batch").get<std::size_t>();
    hp.cf_batch = j.at("cf_batch").get<std::size_t>();
    hp.epochs = j.at("epochs").get<std::size_t>();
    hp.patience = j.at("patience").get<std::size_t>();
    hp.eval_k = j.at("eval_k").get<std::size_t>();
    hp.seed = j.at("seed").get<std::uint64_t>();
    hp.shared_weights = j.at("shared_weights").get<bool>();
    hp.attention = j.at("attention").get<std::string>() == "printed" ? AttentionForm::Printed : AttentionForm::Relation;
    hp.corrupt_heads = j.at("corrupt_heads").get<bool>();
    hp.workers = j.at("workers").get<std::size_t>();
    return hp;
}

std::vector<std::uint32_t> alignment_ids(const std::vector<EntityId>& v) {
    std::vector<std::uint32_t> out;
    out.reserve(v.size());
    for (auto e : v) out.push_back(static_cast<std::uint32_t>(e));
    return out;
}

std::vector<EntityId> alignment_from(const json& j) {
    std::vector<EntityId> out;
    for (auto v : j.get<std::vector<std::uint32_t>>()) out.push_back(static_cast<EntityId>(v));
    return out;
}

void write_graph(Writer& w, const GraphParams& p) {
    for_each_block(p, [&](std::span<const double> b) { w.f64(b); });
}

void read_graph(Reader& r, GraphParams& p) {
    for_each_block(p, [&](std::span<double> b) { r.f64(b, "parameter block"); });
}

}  // namespace

ModelShape shape_of(const ModelState& s) {
    return {s.user_side.table.entity_count(), s.user_side.table.relation_count(), s.item_side.table.entity_count(),
            s.item_side.table.relation_count(), s.user_side.table.dim(),         s.user_side.table.relation_dim(),
            s.user_side.stack.dims,             s.user_side.stack.shared_weights()};
}

void check_shape(const ModelShape& expected, const ModelShape& actual) {
    auto conflict = [](const char* field, std::size_t want, std::size_t got) {
        throw DimensionConflict(std::string("checkpoint dimension conflict: ") + field + " is " + std::to_string(got) +
                                " but the configuration expects " + std::to_string(want));
    };
    auto check = [&](const char* field, std::size_t want, std::size_t got) {
        if (want != 0 && want != got) conflict(field, want, got);
    };
    check("user-side entity count", expected.entities_u, actual.entities_u);
    check("user-side relation count", expected.relations_u, actual.relations_u);
    check("item-side entity count", expected.entities_i, actual.entities_i);
    check("item-side relation count", expected.relations_i, actual.relations_i);
    check("entity dim d", expected.d, actual.d);
    check("relation dim k", expected.k, actual.k);
    if (!expected.dims.empty()) {
        check("layer count L", expected.dims.size() - 1, actual.dims.size() - 1);
        for (std::size_t l = 0; l < expected.dims.size(); ++l) check("layer dim", expected.dims[l], actual.dims[l]);
        if (expected.shared_weights != actual.shared_weights) {
            throw DimensionConflict("checkpoint dimension conflict: aggregator weight sharing differs from configuration");
        }
    }
}

std::vector<std::uint8_t> encode_checkpoint(const ModelState& s) {
    if (s.user_side.stack.dims != s.item_side.stack.dims ||
        s.user_side.stack.shared_weights() != s.item_side.stack.shared_weights() ||
        s.user_side.table.dim() != s.item_side.table.dim() ||
        s.user_side.table.relation_dim() != s.item_side.table.relation_dim()) {
        throw DimensionConflict("both graphs must share embedding and layer dims");
    }
    const ModelShape shape = shape_of(s);
    Writer w;
    w.bytes(kCheckpointMagic, 4);
    w.bytes(&kCheckpointVersion, 1);
    w.u32(shape.entities_u);
    w.u32(shape.relations_u);
    w.u32(shape.entities_i);
    w.u32(shape.relations_i);
    w.u32(shape.d);
    w.u32(shape.k);
    w.u32(shape.dims.size() - 1);
    for (auto d : shape.dims) w.u32(d);
    w.u32(shape.shared_weights ? 1 : 2);
    write_graph(w, s.user_side);
    write_graph(w, s.item_side);

    json meta;
    meta["config"] = s.config_echo;
    meta["seed"] = s.hp.seed;
    meta["epoch"] = s.epoch;
    meta["hyperparameters"] = hyper_to_json(s.hp);
    meta["users"] = s.user_names;
    meta["items"] = s.item_names;
    meta["alignment"] = {{"user_side", {{"users", alignment_ids(s.align_u.user_entity)},
                                        {"items", alignment_ids(s.align_u.item_entity)}}},
                         {"item_side", {{"users", alignment_ids(s.align_i.user_entity)},
                                        {"items", alignment_ids(s.align_i.item_entity)}}}};
    const std::string text = meta.dump();
    w.u64(text.size());
    w.bytes(text.data(), text.size());
    return std::move(w).take();
}

ModelState decode_checkpoint(std::span<const std::uint8_t> bytes, const ModelShape* expected) {
    Reader r(bytes);
    const auto magic = r.bytes(4, "magic");
    if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0) {
        throw FormatError("not a checkpoint file: bad magic at byte offset 0");
    }
    const auto version = r.bytes(1, "version")[0];
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + " at byte offset 4");
    }

    ModelShape shape;
    shape.entities_u = r.u32("N_u");
    shape.relations_u = r.u32("M_u");
    shape.entities_i = r.u32("N_i");
    shape.relations_i = r.u32("M_i");
    shape.d = r.u32("d");
    shape.k = r.u32("k");
    const std::size_t layers_at = r.offset();
    const std::size_t layers = r.u32("L");
    if (layers == 0 || layers > 64) {
        throw FormatError("invalid layer count " + std::to_string(layers) + " at byte offset " + std::to_string(layers_at));
    }
    for (std::size_t l = 0; l <= layers; ++l) shape.dims.push_back(r.u32("layer dims"));
    const std::size_t sets_at = r.offset();
    const auto sets = r.u32("weight sets");
    if (sets != 1 && sets != 2) {
        throw FormatError("invalid aggregator weight-set count " + std::to_string(sets) + " at byte offset " +
                          std::to_string(sets_at));
    }
    shape.shared_weights = sets == 1;
    if (shape.dims[0] != shape.d) {
        throw FormatError("layer dim d_0 (" + std::to_string(shape.dims[0]) + ") differs from d (" +
                          std::to_string(shape.d) + ") at byte offset " + std::to_string(layers_at + 4));
    }

    // Size-check before allocating so a corrupted count cannot request a huge buffer.
    auto graph_doubles = [&](std::size_t n, std::size_t m) {
        long double total = static_cast<long double>(n) * shape.d + static_cast<long double>(m) * shape.k +
                            static_cast<long double>(m) * shape.k * shape.d;
        for (std::size_t l = 1; l < shape.dims.size(); ++l) {
            total += static_cast<long double>(sets) * shape.dims[l] * shape.dims[l - 1];
        }
        return total;
    };
    const long double need = 8.0L * (graph_doubles(shape.entities_u, shape.relations_u) +
                                     graph_doubles(shape.entities_i, shape.relations_i));
    if (need + 8.0L > static_cast<long double>(r.remaining())) {
        throw FormatError("checkpoint truncated at byte offset " + std::to_string(bytes.size()) + ": header at offset 5 "
                          "declares " + std::to_string(static_cast<unsigned long long>(need)) +
                          " parameter bytes but only " + std::to_string(r.remaining()) + " remain");
    }
    {
        // The metadata length sits right after the parameters; the total must match exactly.
        const std::size_t meta_pos = r.offset() + static_cast<std::size_t>(need);
        std::uint64_t declared = 0;
        for (int i = 0; i < 8; ++i) declared |= static_cast<std::uint64_t>(bytes[meta_pos + i]) << (8 * i);
        if (declared != bytes.size() - meta_pos - 8) {
            throw FormatError("checkpoint size mismatch: header at offset 5 implies metadata length field at byte offset " +
                              std::to_string(meta_pos) + ", which does not match the file size " +
                              std::to_string(bytes.size()));
        }
    }
    if (expected) check_shape(*expected, shape);

    ModelState s;
    s.user_side.table = EmbeddingTable::zeros(shape.entities_u, shape.relations_u, shape.d, shape.k);
    s.user_side.stack = LayerStack::zeros(shape.dims, shape.shared_weights);
    s.item_side.table = EmbeddingTable::zeros(shape.entities_i, shape.relations_i, shape.d, shape.k);
    s.item_side.stack = LayerStack::zeros(shape.dims, shape.shared_weights);
    read_graph(r, s.user_side);
    read_graph(r, s.item_side);

    const std::size_t meta_at = r.offset();
    const std::uint64_t meta_len = r.u64("metadata length");
    if (meta_len != r.remaining()) {
        throw FormatError("metadata length " + std::to_string(meta_len) + " at byte offset " + std::to_string(meta_at) +
                          " does not match the " + std::to_string(r.remaining()) + " remaining bytes");
    }
    const auto text = r.bytes(static_cast<std::size_t>(meta_len), "metadata");
    try {
        const json meta = json::parse(text.begin(), text.end());
        s.config_echo = meta.at("config").get<std::map<std::string, std::string>>();
        s.epoch = meta.at("epoch").get<std::uint32_t>();
        s.hp = hyper_from_json(meta.at("hyperparameters"));
        s.user_names = meta.at("users").get<std::vector<std::string>>();
        s.item_names = meta.at("items").get<std::vector<std::string>>();
        const auto& a = meta.at("alignment");
        s.align_u.user_entity = alignment_from(a.at("user_side").at("users"));
        s.align_u.item_entity = alignment_from(a.at("user_side").at("items"));
        s.align_i.user_entity = alignment_from(a.at("item_side").at("users"));
        s.align_i.item_entity = alignment_from(a.at("item_side").at("items"));
    } catch (const json::exception& e) {
        throw FormatError("invalid checkpoint metadata at byte offset " + std::to_string(meta_at + 8) + ": " + e.what());
    }
    return s;
}

void checkpoint_save(const ModelState& state, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(state);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

ModelState checkpoint_load(const std::filesystem::path& path, const ModelShape* expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes, expected);
}

}  // namespace ckgr
