#include "tokfix/pipeline.hpp"

#include "tokfix/adjuster.hpp"
#include "tokfix/backend.hpp"
#include "tokfix/error.hpp"
#include "tokfix/eval.hpp"
#include "tokfix/fixer.hpp"
#include "tokfix/localizer.hpp"
#include "tokfix/log.hpp"
#include "tokfix/region.hpp"
#include "tokfix/synthetic.hpp"
#include "tokfix/util.hpp"

#include <filesystem>
#include <map>
#include <set>
#include <sstream>

namespace tokfix {

namespace {

using nlohmann::json;

// Keys whose value is replaced wholesale instead of merged key by key.
const std::set<std::string> kOpenKeys = {"synthetic.kinds"};

json seedless(json j) {
    j["seed"] = nullptr;
    return j;
}

json fixer_defaults() {
    auto j = seedless(to_json(FixerConfig{}));
    j.erase("use_line_mask");
    j.erase("use_comment");
    j["backend"] = seedless(to_json(BackendConfig{}));
    return j;
}

const char* type_name(const json& v) {
    if (v.is_null()) return "null";
    if (v.is_boolean()) return "boolean";
    if (v.is_number()) return "number";
    if (v.is_string()) return "string";
    if (v.is_array()) return "array";
    return "object";
}

bool same_kind(const json& schema, const json& v) {
    if (schema.is_null()) return true;
    if (schema.is_number()) return v.is_number();
    return std::string(type_name(schema)) == type_name(v);
}

void check_layer(const json& schema, const json& layer, const std::string& prefix) {
    if (!layer.is_object()) fail(ErrorKind::Config, "config " + (prefix.empty() ? "root" : "key '" + prefix + "'") +
                                                        " must be an object");
    for (const auto& [k, v] : layer.items()) {
        const std::string key = prefix.empty() ? k : prefix + "." + k;
        if (!schema.contains(k)) fail(ErrorKind::Config, "unknown config key '" + key + "'");
        const auto& s = schema.at(k);
        if (s.is_object() && !kOpenKeys.count(key)) {
            check_layer(s, v, key);
        } else if (!same_kind(s, v)) {
            fail(ErrorKind::Config, "config key '" + key + "' expects " + type_name(s) + ", got " + type_name(v));
        }
    }
}

void merge_into(json& base, const json& layer, const std::string& prefix) {
    for (const auto& [k, v] : layer.items()) {
        const std::string key = prefix.empty() ? k : prefix + "." + k;
        if (v.is_object() && base.contains(k) && base[k].is_object() && !kOpenKeys.count(key))
            merge_into(base[k], v, key);
        else
            base[k] = v;
    }
}

std::vector<std::string> split_dotted(const std::string& key) {
    std::vector<std::string> parts;
    std::istringstream in(key);
    std::string part;
    while (std::getline(in, part, '.')) parts.push_back(part);
    return parts;
}

// Builds {"a": {"b": value}} for "a.b" after checking the path against the
// defaults.
json override_layer(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        fail(ErrorKind::Config, "override '" + assignment + "' is not of the form key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    json layer = value;
    const auto parts = split_dotted(key);
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
        if (it->empty()) fail(ErrorKind::Config, "override key '" + key + "' has an empty component");
        layer = json{{*it, layer}};
    }
    check_layer(default_run_config(), layer, "");
    return layer;
}

template <typename F>
auto parsed(const std::string& name, F&& parse) {
    try {
        return parse();
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Config) throw;
        fail(ErrorKind::Config, name + ": " + e.what());
    }
}

}  // namespace

json default_run_config() {
    json c;
    c["seed"] = 1;
    c["output_dir"] = "out";
    c["corpus"] = {{"id", "synthetic"}, {"source", "synthetic"}};
    c["synthetic"] = seedless(to_json(MutationSpec{}));
    c["synthetic"]["preset"] = "default";
    c["ingest"] = {{"input", ""}};
    c["split"] = {{"ratios", {0.8, 0.1, 0.1}}, {"seed", nullptr}};
    c["embedding"] = seedless(to_json(EmbeddingConfig{}));
    c["localizer"] = seedless(to_json(LocalizerTrainConfig{}));
    c["adjuster"] = seedless(to_json(AdjusterTrainConfig{}));
    c["adjuster"]["enabled"] = false;
    c["adjuster"]["split"] = "validation";
    c["adjuster"]["probes"] = 1;
    c["adjuster"]["style"] = nullptr;
    c["adjuster"]["single_embedding"] = false;
    c["fixer"] = fixer_defaults();
    c["eval"] = {{"split", "test"}, {"ks", {10, 30, 50, 100, 200}}, {"raw_match", false}};
    c["paths"] = {{"corpus", "corpus.jsonl"},
                  {"split", "split.json"},
                  {"oracle", "oracle.jsonl"},
                  {"localizer", "localizer.json"},
                  {"localizer_history", "localizer_history.json"},
                  {"predictions", "predictions.jsonl"},
                  {"loc_report", "loc_report.json"},
                  {"adjust_data", "adjust.jsonl"},
                  {"adjuster", "adjuster.json"},
                  {"fixes", "fixes.jsonl"},
                  {"candidates", "candidates.jsonl"},
                  {"report", "report.json"},
                  {"report_table", "report.txt"},
                  {"resolved_config", "resolved_config.json"}};
    return c;
}

void apply_override(json& config, const std::string& assignment) {
    merge_into(config, override_layer(assignment), "");
}

json resolve_run_config(const std::optional<std::string>& path, const std::vector<std::string>& overrides) {
    const json defaults = default_run_config();
    json user = json::object();
    if (path) {
        user = json::parse(read_file(*path), nullptr, false);
        if (user.is_discarded()) fail(ErrorKind::Config, *path + ": not valid JSON");
        check_layer(defaults, user, "");
    }
    for (const auto& o : overrides) merge_into(user, override_layer(o), "");

    json config = defaults;
    std::string preset = "default";
    if (user.contains("synthetic") && user["synthetic"].contains("preset"))
        preset = user["synthetic"]["preset"].get<std::string>();
    if (preset == "camel_case") {
        auto p = seedless(to_json(MutationSpec::camel_case_discrepancy(1, MutationSpec{}.functions_per_corpus)));
        p["preset"] = preset;
        config["synthetic"] = p;
    } else if (preset != "default") {
        fail(ErrorKind::Config, "config key 'synthetic.preset' must be default or camel_case, got " + preset);
    }
    merge_into(config, user, "");
    static_cast<void>(Run{config});  // parses every section so bad values surface now
    return config;
}

namespace {

json fingerprint_view(json config) {
    config.erase("output_dir");
    config.erase("paths");
    return config;
}

}  // namespace

std::string run_fingerprint(const json& config) { return config_fingerprint(fingerprint_view(config)); }

Run::Run(json config) : config_(std::move(config)) {
    const auto& c = config_;
    const auto seed_ok = [](const json& v) { return v.is_number_integer() && v.get<std::int64_t>() >= 0; };
    if (!seed_ok(c.at("seed"))) fail(ErrorKind::Config, "config key 'seed' must be a non-negative integer");
    for (const char* name : {"synthetic", "split", "embedding", "localizer", "adjuster", "fixer", "fixer.backend"}) {
        const auto s = section(name);
        if (!seed_ok(s.at("seed")))
            fail(ErrorKind::Config, std::string("config key '") + name + ".seed' must be a non-negative integer");
    }
    parsed("synthetic", [&] { return mutation_spec_from_json(section("synthetic")); });
    parsed("embedding", [&] { return embedding_config_from_json(section("embedding")); });
    parsed("localizer", [&] { return localizer_train_config_from_json(section("localizer")); });
    parsed("adjuster", [&] { return adjuster_train_config_from_json(section("adjuster")); });
    parsed("fixer", [&] { return fixer_config_from_json(section("fixer")); });
    parsed("fixer.backend", [&] { return backend_config_from_json(section("fixer.backend")); });
    const auto src = c.at("corpus").at("source").get<std::string>();
    if (src != "synthetic" && src != "file")
        fail(ErrorKind::Config, "config key 'corpus.source' must be synthetic or file, got " + src);
    for (const char* key : {"eval", "adjuster"}) {
        const auto which = c.at(key).at("split").get<std::string>();
        if (which != "train" && which != "validation" && which != "test" && which != "all")
            fail(ErrorKind::Config, std::string("config key '") + key + ".split' must be train, validation, test or all");
    }
    if (!c.at("adjuster").at("style").is_null())
        parsed("adjuster.style",
                [&] { return prompt_style_from_string(c.at("adjuster").at("style").get<std::string>()); });
    if (c.at("adjuster").at("probes").get<int>() < 1) fail(ErrorKind::Config, "config key 'adjuster.probes' must be at least 1");
    const auto& ratios = c.at("split").at("ratios");
    if (ratios.size() != 3) fail(ErrorKind::Config, "config key 'split.ratios' needs three numbers");
    for (const auto& r : ratios)
        if (!r.is_number()) fail(ErrorKind::Config, "config key 'split.ratios' needs three numbers");
    for (const auto& k : c.at("eval").at("ks"))
        if (!k.is_number_integer() || k.get<int>() < 1)
            fail(ErrorKind::Config, "config key 'eval.ks' must hold positive integers");
    for (const auto& [k, v] : c.at("paths").items())
        if (!v.is_string()) fail(ErrorKind::Config, "config key 'paths." + k + "' must be a string");
}

std::string Run::path(const std::string& key) const {
    const std::filesystem::path p(config_.at("paths").at(key).get<std::string>());
    if (p.is_absolute()) return p.string();
    return (std::filesystem::path(config_.at("output_dir").get<std::string>()) / p).string();
}

json Run::section(const std::string& name) const {
    const json* node = &config_;
    for (const auto& part : split_dotted(name)) node = &node->at(part);
    json out = *node;
    if (out.contains("seed") && out["seed"].is_null()) out["seed"] = config_.at("seed");
    return out;
}

void Run::write_resolved_config() const { write_file(path("resolved_config"), config_.dump(2) + "\n"); }

std::vector<BugFixSample> Run::corpus() const { return load_corpus(path("corpus")); }

std::vector<BugFixSample> Run::split_samples(const std::string& which) const {
    auto all = corpus();
    if (which == "all") return all;
    const auto s = load_split(path("split"));
    if (which == "train") return select(all, s.train);
    if (which == "validation") return select(all, s.validation);
    return select(all, s.test);
}

namespace {

void require_file(const std::string& path, const std::string& what) {
    if (!std::filesystem::exists(path)) fail(ErrorKind::Io, what + " not found: " + path);
}

}  // namespace

void Run::gen_synthetic() {
    write_resolved_config();
    const auto spec = mutation_spec_from_json(section("synthetic"));
    log_info("generating " + std::to_string(spec.functions_per_corpus) + " synthetic samples");
    const auto samples = generate_corpus(spec);
    write_corpus(path("corpus"), samples);
    log_info("wrote " + path("corpus"));
}

void Run::ingest(const std::string& input) {
    write_resolved_config();
    const auto samples = load_corpus(input);
    std::size_t unchanged = 0;
    for (const auto& s : samples) unchanged += s.unchanged();
    log_info("ingested " + std::to_string(samples.size()) + " samples from " + input + " (" +
             std::to_string(unchanged) + " unchanged)");
    write_corpus(path("corpus"), samples);
}

void Run::split() {
    write_resolved_config();
    const auto samples = corpus();
    std::array<double, 3> ratios{};
    for (std::size_t i = 0; i < 3; ++i) ratios[i] = config_.at("split").at("ratios")[i].get<double>();
    const auto s = split_corpus(samples, ratios, section("split").at("seed").get<std::uint64_t>());
    write_split(path("split"), s);
    log_info("split " + std::to_string(samples.size()) + " samples into " + std::to_string(s.train.size()) + "/" +
             std::to_string(s.validation.size()) + "/" + std::to_string(s.test.size()));
}

void Run::oracle() {
    write_resolved_config();
    const auto samples = corpus();
    std::string out;
    std::size_t degenerate = 0;
    for (const auto& s : samples) {
        json rec{{"id", s.id}};
        bool ok = true;
        for (auto id : {TokenizerId::Loc, TokenizerId::Fix}) {
            try {
                const auto d = extract_region(tokenize(s.buggy, id), tokenize(s.fixed, id));
                rec[to_string(id)] = oracle_record(s.id, d);
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::DegeneratePair) throw;
                rec[to_string(id)] = nullptr;
                ok = false;
            }
        }
        degenerate += !ok;
        out += rec.dump() + "\n";
    }
    write_file(path("oracle"), out);
    log_info("oracle regions for " + std::to_string(samples.size()) + " samples, " + std::to_string(degenerate) +
             " degenerate");
}

void Run::train_loc() {
    write_resolved_config();
    const auto all = corpus();
    const auto s = load_split(path("split"));
    const auto cfg = localizer_train_config_from_json(section("localizer"));
    std::size_t dropped = 0;
    const auto train = make_localization_examples(select(all, s.train), true, &dropped);
    const auto val = make_localization_examples(select(all, s.validation), true, &dropped);
    log_info("training localizer on " + std::to_string(train.size()) + " examples (" + std::to_string(dropped) +
             " degenerate skipped)");
    TrainHistory h;
    const auto params = train_localizer(train, val, cfg, embedding_config_from_json(section("embedding")), &h);
    save_localizer(path("localizer"), params);
    write_file(path("localizer_history"), json{{"train_loss", h.train_loss},
                                               {"val_start_accuracy", h.val_start_accuracy},
                                               {"best_epoch", h.best_epoch},
                                               {"best_val_start_accuracy", h.best_val_start_accuracy}}
                                                  .dump(2) +
                                              "\n");
    log_info("best epoch " + std::to_string(h.best_epoch) + ", validation start accuracy " +
             std::to_string(h.best_val_start_accuracy));
}

int Run::eval_loc() {
    write_resolved_config();
    require_file(path("localizer"), "localizer checkpoint");
    const Localizer loc(load_localizer(path("localizer")));
    const auto& lc = config_.at("localizer");
    const auto examples = make_localization_examples(split_samples(config_.at("eval").at("split").get<std::string>()));
    const auto results =
        predict_all(loc, examples, lc.at("use_line_mask").get<bool>(), lc.at("use_comment").get<bool>());
    std::string out;
    std::vector<std::pair<BugRegion, BugRegion>> pairs;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        out += prediction_record(examples[i].id, results[i]).dump() + "\n";
        pairs.emplace_back(results[i].region, examples[i].truth);
    }
    write_file(path("predictions"), out);
    const auto acc = localization_accuracies(pairs);
    EvalReport r;
    r.localization = acc;
    json rep{{"n", pairs.size()}};
    for (const auto& [k, v] : std::map<std::string, std::optional<double>>{
             {"loc_start_acc", acc ? std::optional(acc->start) : std::nullopt},
             {"loc_end_acc", acc ? std::optional(acc->end) : std::nullopt},
             {"loc_both_acc", acc ? std::optional(acc->both) : std::nullopt},
             {"loc_partial_acc", acc ? std::optional(acc->partial) : std::nullopt}})
        rep[k] = v ? json(*v) : json(nullptr);
    const auto bad = check_invariants(r);
    rep["invariant_violations"] = bad;
    write_file(path("loc_report"), rep.dump(2) + "\n");
    for (const auto& b : bad) log_warn("invariant violated: " + b);
    return bad.empty() ? 0 : 2;
}

void Run::collect_adjust() {
    write_resolved_config();
    require_file(path("localizer"), "localizer checkpoint");
    const Localizer loc(load_localizer(path("localizer")));
    const auto all = corpus();
    const auto backend = make_backend(backend_config_from_json(section("fixer.backend")), all);
    const auto fixer = fixer_config_from_json(section("fixer"));
    const auto& ac = config_.at("adjuster");
    const auto& lc = config_.at("localizer");
    CollectConfig cc;
    cc.style = ac.at("style").is_null() ? fixer.style : prompt_style_from_string(ac.at("style").get<std::string>());
    cc.probes = ac.at("probes").get<int>();
    cc.max_new_tokens = fixer.max_new_tokens;
    cc.temperature = fixer.temperature;
    cc.seed = section("adjuster").at("seed").get<std::uint64_t>();
    cc.use_line_mask = lc.at("use_line_mask").get<bool>();
    cc.use_comment = lc.at("use_comment").get<bool>();
    cc.single_embedding = ac.at("single_embedding").get<bool>();
    cc.max_in_flight = fixer.max_in_flight;
    std::size_t dropped = 0;
    const auto samples = split_samples(ac.at("split").get<std::string>());
    const auto examples = collect_adjustment_data(samples, loc, *backend, cc, &dropped);
    write_adjustment_dataset(path("adjust_data"), examples);
    log_info("collected " + std::to_string(examples.size()) + " adjustment examples, " + std::to_string(dropped) +
             " without a viable shift");
}

void Run::train_adjust() {
    write_resolved_config();
    auto examples = load_adjustment_dataset(path("adjust_data"));
    const auto& ac = config_.at("adjuster");
    const bool single = ac.at("single_embedding").get<bool>();
    const auto emb = embedding_config_from_json(section("embedding"));
    attach_features(examples, corpus(), FeatureEncoder(emb, single));
    const auto cfg = adjuster_train_config_from_json(section("adjuster"));
    AdjusterHistory h;
    const auto params = train_adjuster(examples, emb, cfg, single, &h);
    save_adjuster(path("adjuster"), params);
    log_info("adjuster trained on " + std::to_string(h.trained_on) + ", holdout accuracy " +
             std::to_string(h.holdout_accuracy));
}

void Run::fix() {
    write_resolved_config();
    const auto all = corpus();
    auto cfg = fixer_config_from_json(section("fixer"));
    cfg.use_line_mask = config_.at("localizer").at("use_line_mask").get<bool>();
    cfg.use_comment = config_.at("localizer").at("use_comment").get<bool>();

    std::optional<Localizer> loc;
    std::optional<Adjuster> adj;
    if (!cfg.use_oracle_regions) {
        require_file(path("localizer"), "localizer checkpoint");
        loc.emplace(load_localizer(path("localizer")));
        if (config_.at("adjuster").at("enabled").get<bool>()) {
            require_file(path("adjuster"), "adjuster checkpoint");
            adj.emplace(load_adjuster(path("adjuster")));
        }
    }
    const auto backend = make_backend(backend_config_from_json(section("fixer.backend")), all);
    const auto samples = split_samples(config_.at("eval").at("split").get<std::string>());
    log_info("fixing " + std::to_string(samples.size()) + " samples with " + backend->id() + ", style " +
             to_string(cfg.style) + ", budget " + std::to_string(cfg.budget));
    const auto fixes = fix_all(samples, loc ? &*loc : nullptr, adj ? &*adj : nullptr, *backend, cfg);
    write_fixes(path("fixes"), fixes);
    write_candidates(path("candidates"), fixes);
}

int Run::evaluate() {
    write_resolved_config();
    std::map<std::string, BugFixSample> by_id;
    for (auto& s : corpus()) by_id.emplace(s.id, std::move(s));
    std::vector<SampleOutcome> outcomes;
    for (auto& f : load_fixes(path("fixes"), path("candidates"))) {
        const auto it = by_id.find(f.sample_id);
        if (it == by_id.end()) fail(ErrorKind::Schema, "fix record for unknown sample " + f.sample_id);
        SampleOutcome o;
        o.id = f.sample_id;
        o.fixed = it->second.fixed;
        o.candidates = std::move(f.candidates);
        o.predicted = f.predicted_loc;
        o.truth = f.truth_loc;
        o.error = f.error;
        outcomes.push_back(std::move(o));
    }
    const auto& ec = config_.at("eval");
    const auto report = tokfix::evaluate(config_.at("corpus").at("id").get<std::string>(), outcomes,
                                         ec.at("ks").get<std::vector<int>>(), fingerprint_view(config_),
                                         ec.at("raw_match").get<bool>());
    write_file(path("report"), render_machine(report));
    write_file(path("report_table"), render_table(report));
    const auto bad = check_invariants(report);
    for (const auto& b : bad) log_warn("invariant violated: " + b);
    return bad.empty() ? 0 : 2;
}

int Run::pipeline() {
    const bool oracle_regions = config_.at("fixer").at("use_oracle_regions").get<bool>();
    if (config_.at("corpus").at("source") == "synthetic") {
        gen_synthetic();
    } else {
        const auto input = config_.at("ingest").at("input").get<std::string>();
        if (!input.empty()) ingest(input);
    }
    split();
    oracle();
    if (!oracle_regions) {
        train_loc();
        if (const int rc = eval_loc(); rc != 0) return rc;
        if (config_.at("adjuster").at("enabled").get<bool>()) {
            collect_adjust();
            train_adjust();
        }
    }
    fix();
    return evaluate();
}

}  // namespace tokfix
