#include "ckgr/cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "ckgr/checkpoint.hpp"
#include "ckgr/errors.hpp"
#include "ckgr/ingest.hpp"
#include "ckgr/sweep.hpp"

namespace ckgr {

namespace fs = std::filesystem;

std::string git_blob_sha1(const std::string& content) {
    const std::string header = "blob " + std::to_string(content.size()) + '\0';
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx) throw OracleError("cannot allocate digest context");
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                    EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                    EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                    EVP_DigestFinal_ex(ctx, md, &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok) throw OracleError("SHA-1 digest failed");
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return hex.str();
}

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::ofstream open_output(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

std::string num(double v) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, p);
}

}  // namespace

std::string git_blob_sha1_file(const fs::path& path) { return git_blob_sha1(read_file(path)); }

LoadedInputs load_inputs(const RunConfig& cfg, std::ostream& err) {
    LoadedInputs li;
    const std::string inter = cfg.path("data.interactions");
    if (inter.empty()) throw ConfigError("data.interactions is not set; use --config FILE or --set data.interactions=PATH");
    const auto& fmt_key = cfg.get("data.format");
    const InteractionFormat fmt = fmt_key == "csv"   ? InteractionFormat::Csv
                                  : fmt_key == "tsv" ? InteractionFormat::Tsv
                                                     : format_for(inter);
    const bool strict = cfg.strict_parse();

    auto report = [&](const fs::path& p, const ParseReport& r) {
        const std::size_t shown = std::min<std::size_t>(r.errors.size(), 20);
        for (std::size_t i = 0; i < shown; ++i) {
            err << "warning: " << p.string() << ":" << r.errors[i].line << ": " << r.errors[i].message << "\n";
        }
        if (r.errors.size() > shown) err << "warning: " << (r.errors.size() - shown) << " more malformed lines\n";
    };

    auto parsed = parse_interactions(fs::path(inter), fmt, strict);
    report(inter, parsed.report);
    li.files.emplace_back(inter);
    auto records = to_implicit(parsed.rows, cfg.implicit_threshold());
    li.inputs.interactions = filter_min_interactions(records, cfg.min_interactions());

    if (const auto m = cfg.path("data.manifest"); !m.empty()) {
        std::ifstream in(m);
        if (!in) throw IoError("cannot read dataset manifest " + m);
        verify_counts(parse_count_manifest(in), count_dataset(li.inputs.interactions));
        li.files.emplace_back(m);
    }
    for (const auto& [key, dst] : {std::pair{"data.user_attrs", &li.inputs.user_attrs},
                                   std::pair{"data.item_attrs", &li.inputs.item_attrs}}) {
        const auto p = cfg.path(key);
        if (p.empty()) continue;
        auto triples = parse_attribute_triples(fs::path(p), strict);
        report(p, triples.report);
        *dst = std::move(triples.rows);
        li.files.emplace_back(p);
    }
    return li;
}

namespace {

using nlohmann::json;

struct Common {
    std::string config_path;
    std::vector<std::string> sets;
    std::string seed;
    std::size_t workers = 0;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "flat key = value config file");
    cmd->add_option("--set", c.sets, "override a config key, key=value (repeatable)");
    cmd->add_option("--seed", c.seed, "random seed (falls back to CKGR_SEED, then 42)");
    cmd->add_option("--workers", c.workers, "threads for evaluation fan-out");
}

RunConfig resolve_config(const Common& c) {
    RunConfig cfg;
    if (!c.config_path.empty()) cfg.load_file(c.config_path);
    for (const auto& s : c.sets) cfg.set_assignment(s);
    if (!c.seed.empty()) cfg.set("seed", c.seed);
    if (c.workers > 0) cfg.set("train.workers", std::to_string(c.workers));
    cfg.apply_seed_env(std::getenv("CKGR_SEED"));
    cfg.validate();
    return cfg;
}

void write_manifest(const fs::path& path, const std::string& command, const RunConfig& cfg,
                    const std::vector<fs::path>& inputs, const std::vector<std::string>& outputs,
                    const json& extra = json::object()) {
    json m;
    m["command"] = command;
    m["seed"] = cfg.seed();
    m["config"] = cfg.values();
    json in = json::array();
    for (const auto& p : inputs) {
        in.push_back({{"path", p.string()}, {"git_sha1", git_blob_sha1_file(p)}, {"bytes", fs::file_size(p)}});
    }
    m["inputs"] = in;
    m["outputs"] = outputs;
    if (!extra.empty()) m["details"] = extra;
    auto out = open_output(path);
    out << m.dump(2) << "\n";
}

PreparedDataset prepare(const RunConfig& cfg, const LoadedInputs& li, std::ostream& err) {
    PreparedDataset d = prepare_dataset(li.inputs, cfg.split_ratios(), cfg.seed(), cfg.id_order(), cfg.strict_parse());
    if (d.dropped_user_attrs + d.dropped_item_attrs > 0) {
        err << "warning: dropped " << d.dropped_user_attrs << " user and " << d.dropped_item_attrs
            << " item attribute triples whose head has no interactions\n";
    }
    return d;
}

// Loads a checkpoint and confirms it belongs to `data`.
ModelState load_model(const fs::path& path, const PreparedDataset& data, const RunConfig& cfg) {
    ModelShape expected;
    expected.entities_u = data.user_side.kg.entity_count();
    expected.relations_u = data.user_side.kg.relation_count();
    expected.entities_i = data.item_side.kg.entity_count();
    expected.relations_i = data.item_side.kg.relation_count();
    ModelState s = checkpoint_load(path, &expected);
    // The split depends on the seed and ratios; a different one would leak train items into evaluation.
    const auto ratios = s.config_echo.find("split.ratios");
    if (s.hp.seed != cfg.seed() || (ratios != s.config_echo.end() && ratios->second != cfg.get("split.ratios"))) {
        throw DimensionConflict("checkpoint " + path.string() + " was trained with seed " + std::to_string(s.hp.seed) +
                                " and a different dataset split; rerun with the same seed and split.ratios");
    }
    const auto users = data.train_graph.users.names();
    const auto items = data.train_graph.items.names();
    if (!std::equal(s.user_names.begin(), s.user_names.end(), users.begin(), users.end()) ||
        !std::equal(s.item_names.begin(), s.item_names.end(), items.begin(), items.end()) ||
        s.align_u.user_entity != data.user_side.alignment.user_entity ||
        s.align_u.item_entity != data.user_side.alignment.item_entity ||
        s.align_i.user_entity != data.item_side.alignment.user_entity ||
        s.align_i.item_entity != data.item_side.alignment.item_entity) {
        throw DimensionConflict("checkpoint " + path.string() +
                                " was trained on a different dataset or split; retrain or point the config at its data");
    }
    return s;
}

void write_history(std::ostream& os, const std::vector<EpochLog>& history) {
    os << "epoch,kg_u,kg_i,cf,reg,total,val_recall\n";
    for (const auto& h : history) {
        os << h.epoch << ',' << num(h.kg_u) << ',' << num(h.kg_i) << ',' << num(h.cf) << ',' << num(h.reg) << ','
           << num(h.total) << ',' << num(h.val_recall) << '\n';
    }
}

int cmd_synth(const Common& c, const std::string& out_dir, SynthConfig sc, std::ostream& out) {
    RunConfig cfg = resolve_config(c);
    sc.seed = cfg.seed();
    const SynthData data = synth_generate(sc);
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    {
        auto f = open_output(dir / "interactions.tsv");
        write_implicit(f, data.interactions);
    }
    {
        auto f = open_output(dir / "user_attrs.tsv");
        write_attribute_triples(f, data.user_attrs);
    }
    {
        auto f = open_output(dir / "item_attrs.tsv");
        write_attribute_triples(f, data.item_attrs);
    }
    {
        auto f = open_output(dir / "factors.tsv");
        f << "kind\tid\tblock";
        for (std::size_t k = 0; k < sc.latent_dim; ++k) f << "\tf" << k;
        f << '\n';
        auto rows = [&](const char* kind, const Matrix& m, const std::vector<std::size_t>& block, auto name) {
            for (std::size_t r = 0; r < m.rows(); ++r) {
                f << kind << '\t' << name(r) << '\t' << block[r];
                for (double v : m.row(r)) f << '\t' << num(v);
                f << '\n';
            }
        };
        rows("user", data.user_factors, data.user_block, synth_user_name);
        rows("item", data.item_factors, data.item_block, synth_item_name);
    }
    const json params = {{"users", sc.n_users},       {"items", sc.n_items},
                         {"factors", sc.latent_dim},  {"per_user", sc.interactions_per_user},
                         {"attrs_per_factor", sc.attr_entities_per_factor}, {"noise", sc.noise}};
    write_manifest(dir / "manifest.json", "synth", cfg, {},
                   {"interactions.tsv", "user_attrs.tsv", "item_attrs.tsv", "factors.tsv"}, params);
    out << "wrote " << data.interactions.size() << " interactions, " << data.user_attrs.size() << " user and "
        << data.item_attrs.size() << " item attribute triples to " << dir.string() << "\n";
    return kExitOk;
}

int cmd_ingest(const Common& c, const std::string& out_path, std::ostream& out, std::ostream& err) {
    const RunConfig cfg = resolve_config(c);
    const LoadedInputs li = load_inputs(cfg, err);
    const auto counts = count_dataset(li.inputs.interactions);
    {
        auto f = open_output(out_path);
        write_implicit(f, li.inputs.interactions);
    }
    write_manifest(out_path + ".manifest.json", "ingest", cfg, li.files, {fs::path(out_path).filename().string()},
                   {{"users", counts.users}, {"items", counts.items}, {"interactions", counts.interactions}});
    out << "users=" << counts.users << "\nitems=" << counts.items << "\ninteractions=" << counts.interactions << "\n";
    return kExitOk;
}

int cmd_build_graph(const Common& c, const std::string& out_dir, std::ostream& out, std::ostream& err) {
    const RunConfig cfg = resolve_config(c);
    const LoadedInputs li = load_inputs(cfg, err);
    const PreparedDataset data = prepare(cfg, li, err);
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    {
        auto f = open_output(dir / "user_side.tsv");
        data.user_side.kg.write_tsv(f);
    }
    {
        auto f = open_output(dir / "item_side.tsv");
        data.item_side.kg.write_tsv(f);
    }
    json stats;
    for (const auto& [name, b] : {std::pair{"user_side", &data.user_side}, std::pair{"item_side", &data.item_side}}) {
        stats[name] = {{"entities", b->stats.entities},
                       {"relations", b->stats.relations},
                       {"triples", b->kg.triple_count()},
                       {"interaction_triples", b->stats.interaction_triples},
                       {"attribute_triples", b->stats.attribute_triples},
                       {"duplicate_attribute_triples", b->stats.duplicate_attribute_triples}};
        out << name << ": " << b->kg.triple_count() << " triples, " << b->stats.entities << " entities, "
            << b->stats.relations << " relations, " << b->stats.duplicate_attribute_triples
            << " duplicate attribute triples dropped\n";
    }
    write_manifest(dir / "manifest.json", "build-graph", cfg, li.files, {"user_side.tsv", "item_side.tsv"}, stats);
    return kExitOk;
}

int cmd_train(const Common& c, const std::string& model_path, std::string history_path, bool quiet,
              std::ostream& out, std::ostream& err) {
    const RunConfig cfg = resolve_config(c);
    const LoadedInputs li = load_inputs(cfg, err);
    const PreparedDataset data = prepare(cfg, li, err);
    ModelState state = init_model(cfg.hyperparameters(), data);
    state.config_echo = cfg.values();
    TrainHooks hooks;
    if (!quiet) {
        hooks.on_epoch = [&](const EpochLog& e) {
            err << "epoch " << e.epoch << " kg_u=" << e.kg_u << " kg_i=" << e.kg_i << " cf=" << e.cf
                << " total=" << e.total << " val_recall=" << e.val_recall << "\n";
        };
    }
    TrainResult result = train(std::move(state), data, hooks);
    checkpoint_save(result.state, model_path);
    if (history_path.empty()) history_path = model_path + ".history.csv";
    {
        auto f = open_output(history_path);
        write_history(f, result.history);
    }
    write_manifest(model_path + ".manifest.json", "train", cfg, li.files,
                   {fs::path(model_path).filename().string(), fs::path(history_path).filename().string()},
                   {{"epochs_run", result.history.size()},
                    {"best_epoch", result.best_epoch},
                    {"early_stopped", result.early_stopped},
                    {"diverged", result.diverged}});
    if (result.diverged) {
        err << "error: " << result.message << "; saved last good state (epoch " << result.state.epoch << ") to "
            << model_path << "\n";
        return kExitRuntime;
    }
    out << "trained " << result.history.size() << " epochs, best epoch " << result.best_epoch
        << (result.early_stopped ? " (early stopped)" : "") << ", saved " << model_path << "\n";
    return kExitOk;
}

int cmd_evaluate(const Common& c, const std::string& model_path, const std::string& split, std::size_t k,
                 bool baselines, const std::string& out_path, std::ostream& out, std::ostream& err) {
    const RunConfig cfg = resolve_config(c);
    const Hyperparameters hp = cfg.hyperparameters();
    if (k == 0) k = hp.eval_k;
    if (split != "test" && split != "validation") throw ConfigError("--split must be test or validation");
    const LoadedInputs li = load_inputs(cfg, err);
    const PreparedDataset data = prepare(cfg, li, err);
    const ModelState state = load_model(model_path, data, cfg);
    const auto& truth = split == "test" ? data.test_items : data.validation_items;

    EvalReport report;
    auto timed = [&](const std::string& label, const Ranker& r) {
        const auto t0 = std::chrono::steady_clock::now();
        const MetricSummary m = evaluate_ranker(r, data.train_items, truth, k, hp.workers);
        const auto t1 = std::chrono::steady_clock::now();
        report.rows.push_back(
            {label, k, m.precision, m.recall, cfg.seed(), std::chrono::duration<double, std::milli>(t1 - t0).count()});
    };
    const Representations reps = compute_representations(state, data.user_side.kg, data.item_side.kg);
    timed("model", ModelRanker(reps));
    if (baselines) {
        timed("popularity", PopularityRanker(data.train_items, data.item_count()));
        timed("random", RandomRanker(cfg.seed(), data.item_count()));
    }
    std::vector<fs::path> inputs = li.files;
    inputs.emplace_back(model_path);
    if (out_path.empty()) {
        report.write_csv(out);
        write_manifest(model_path + ".evaluate.manifest.json", "evaluate", cfg, inputs, {}, {{"split", split}});
    } else {
        {
            auto f = open_output(out_path);
            report.write_csv(f);
        }
        write_manifest(out_path + ".manifest.json", "evaluate", cfg, inputs, {fs::path(out_path).filename().string()},
                       {{"split", split}});
    }
    return kExitOk;
}

int cmd_recommend(const Common& c, const std::string& model_path, const std::string& user, std::size_t k,
                  std::ostream& out, std::ostream& err) {
    const RunConfig cfg = resolve_config(c);
    if (k == 0) k = cfg.hyperparameters().eval_k;
    const LoadedInputs li = load_inputs(cfg, err);
    const PreparedDataset data = prepare(cfg, li, err);
    const ModelState state = load_model(model_path, data, cfg);
    const auto u = data.train_graph.users.find(user);
    if (!u) throw ConfigError("unknown user '" + user + "'");
    const Representations reps = compute_representations(state, data.user_side.kg, data.item_side.kg);
    std::vector<double> scores(reps.items.rows());
    ModelRanker(reps).score(*u, scores);
    const auto ranked = topk(scores, k, data.train_items[*u]);
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        out << (r + 1) << '\t' << data.train_graph.items.name(ranked[r]) << '\t' << num(scores[ranked[r]]) << '\n';
    }
    std::vector<fs::path> inputs = li.files;
    inputs.emplace_back(model_path);
    write_manifest(model_path + ".recommend.manifest.json", "recommend", cfg, inputs, {},
                   {{"user", user}, {"k", k}});
    return kExitOk;
}

int cmd_sweep(const Common& c, const std::string& layers_text, const std::string& out_path, std::ostream& out,
              std::ostream& err) {
    const RunConfig cfg = resolve_config(c);
    const auto layers = parse_size_list("--layers", layers_text);
    const LoadedInputs li = load_inputs(cfg, err);
    const PreparedDataset data = prepare(cfg, li, err);
    SweepProgress progress;
    progress.on_trained = [&](std::size_t l, const TrainResult& r) {
        err << "L=" << l << ": " << r.history.size() << " epochs, best epoch " << r.best_epoch
            << (r.diverged ? " (diverged)" : "") << "\n";
    };
    const EvalReport report = sweep_layers(data, layers, cfg.hyperparameters(), progress);
    if (out_path.empty()) {
        report.write_csv(out);
        return kExitOk;
    }
    {
        auto f = open_output(out_path);
        report.write_csv(f);
    }
    write_manifest(out_path + ".manifest.json", "sweep-layers", cfg, li.files, {fs::path(out_path).filename().string()},
                   {{"layers", layers}});
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Dual collaborative knowledge-graph recommender", "ckgr"};
    app.require_subcommand(1);

    Common common;
    std::string out_path, model_path, history_path, user, split = "test", layers = "1,2,3,4";
    std::size_t k = 0;
    bool baselines = false, quiet = false;
    SynthConfig sc;

    auto* synth = app.add_subcommand("synth", "generate a seeded synthetic dataset");
    add_common(synth, common);
    synth->add_option("--out", out_path, "output directory")->required();
    synth->add_option("--users", sc.n_users);
    synth->add_option("--items", sc.n_items);
    synth->add_option("--factors", sc.latent_dim);
    synth->add_option("--per-user", sc.interactions_per_user);
    synth->add_option("--attrs", sc.attr_entities_per_factor, "attribute entities per factor");
    synth->add_option("--noise", sc.noise);

    auto* ingest = app.add_subcommand("ingest", "parse, binarize and filter interactions");
    add_common(ingest, common);
    ingest->add_option("--out", out_path, "normalized interaction TSV")->required();

    auto* build = app.add_subcommand("build-graph", "build both collaborative knowledge graphs");
    add_common(build, common);
    build->add_option("--out", out_path, "output directory")->required();

    auto* trn = app.add_subcommand("train", "train a model and write a checkpoint");
    add_common(trn, common);
    trn->add_option("--out", model_path, "checkpoint path")->required();
    trn->add_option("--history", history_path, "loss history CSV (default <out>.history.csv)");
    trn->add_flag("--quiet", quiet, "no per-epoch log");

    auto* evaluate = app.add_subcommand("evaluate", "Precision@K / Recall@K of a checkpoint");
    add_common(evaluate, common);
    evaluate->add_option("--model", model_path)->required();
    evaluate->add_option("--split", split, "test or validation");
    evaluate->add_option("--k", k, "cutoff (default eval.k)");
    evaluate->add_flag("--baselines", baselines, "also report popularity and random rankers");
    evaluate->add_option("--out", out_path, "report CSV (default stdout)");

    auto* recommend = app.add_subcommand("recommend", "top-K items for one user");
    add_common(recommend, common);
    recommend->add_option("--model", model_path)->required();
    recommend->add_option("--user", user)->required();
    recommend->add_option("--k", k, "list length (default eval.k)");

    auto* sweep = app.add_subcommand("sweep-layers", "train and evaluate one model per depth");
    add_common(sweep, common);
    sweep->add_option("--layers", layers, "comma-separated depths");
    sweep->add_option("--out", out_path, "report CSV (default stdout)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return kExitOk;
        }
        err << "error: " << e.what() << " (run with --help for usage)\n";
        return kExitValidation;
    }

    try {
        if (synth->parsed()) return cmd_synth(common, out_path, sc, out);
        if (ingest->parsed()) return cmd_ingest(common, out_path, out, err);
        if (build->parsed()) return cmd_build_graph(common, out_path, out, err);
        if (trn->parsed()) return cmd_train(common, model_path, history_path, quiet, out, err);
        if (evaluate->parsed()) return cmd_evaluate(common, model_path, split, k, baselines, out_path, out, err);
        if (recommend->parsed()) return cmd_recommend(common, model_path, user, k, out, err);
        if (sweep->parsed()) return cmd_sweep(common, layers, out_path, out, err);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const RuntimeFault& e) {
        err << "fault: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "fault: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitValidation;
}

}  // namespace ckgr
