#include "tokfix/fixer.hpp"

#include "tokfix/error.hpp"
#include "tokfix/eval.hpp"
#include "tokfix/log.hpp"
#include "tokfix/util.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace tokfix {

nlohmann::json to_json(const FixerConfig& c) {
    return {{"style", to_string(c.style)},
            {"budget", c.budget},
            {"max_new_tokens", c.max_new_tokens},
            {"temperature", c.temperature},
            {"seed", c.seed},
            {"prompt_comment", c.prompt_comment},
            {"use_line_mask", c.use_line_mask},
            {"use_comment", c.use_comment},
            {"use_oracle_regions", c.use_oracle_regions},
            {"max_in_flight", c.max_in_flight}};
}

FixerConfig fixer_config_from_json(const nlohmann::json& j) {
    FixerConfig c;
    try {
        if (j.contains("style")) c.style = prompt_style_from_string(j.at("style").get<std::string>());
        if (j.contains("budget")) c.budget = j.at("budget").get<int>();
        if (j.contains("max_new_tokens")) c.max_new_tokens = j.at("max_new_tokens").get<int>();
        if (j.contains("temperature")) c.temperature = j.at("temperature").get<double>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("prompt_comment")) c.prompt_comment = j.at("prompt_comment").get<bool>();
        if (j.contains("use_line_mask")) c.use_line_mask = j.at("use_line_mask").get<bool>();
        if (j.contains("use_comment")) c.use_comment = j.at("use_comment").get<bool>();
        if (j.contains("use_oracle_regions")) c.use_oracle_regions = j.at("use_oracle_regions").get<bool>();
        if (j.contains("max_in_flight")) c.max_in_flight = j.at("max_in_flight").get<int>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("fixer: ") + e.what());
    } catch (const Error& e) {
        fail(ErrorKind::Config, std::string("fixer.style: ") + e.what());
    }
    if (c.budget < 1) fail(ErrorKind::Config, "fixer.budget must be at least 1");
    if (c.max_new_tokens < 1) fail(ErrorKind::Config, "fixer.max_new_tokens must be positive");
    if (!(c.temperature >= 0.0)) fail(ErrorKind::Config, "fixer.temperature must be non-negative");
    if (c.max_in_flight < 1) fail(ErrorKind::Config, "fixer.max_in_flight must be at least 1");
    return c;
}

namespace {

std::vector<CandidatePatch> dedup(std::vector<CandidatePatch> in) {
    std::unordered_set<std::string> seen;
    std::vector<CandidatePatch> out;
    for (auto& c : in) {
        if (!seen.insert(normalized_key(c.fixed_function)).second) continue;
        out.push_back(std::move(c));
        out.back().rank = static_cast<int>(out.size());
    }
    return out;
}

}  // namespace

std::vector<CandidatePatch> rank_candidates(std::vector<CandidatePatch> candidates) {
    const bool scored = !candidates.empty() &&
                        std::all_of(candidates.begin(), candidates.end(), [](const auto& c) { return c.score.has_value(); });
    if (scored) {
        std::stable_sort(candidates.begin(), candidates.end(),
                         [](const auto& a, const auto& b) { return *a.score > *b.score; });
    }
    return dedup(std::move(candidates));
}

std::vector<CandidatePatch> merge_candidates(const std::vector<std::vector<CandidatePatch>>& lists) {
    std::vector<CandidatePatch> interleaved;
    std::size_t depth = 0;
    for (const auto& l : lists) depth = std::max(depth, l.size());
    for (std::size_t r = 0; r < depth; ++r)
        for (const auto& l : lists)
            if (r < l.size()) interleaved.push_back(l[r]);
    return dedup(std::move(interleaved));
}

SampleFix fix_sample(const BugFixSample& sample, const Localizer* localizer, const Adjuster* adjuster,
                     const CompletionBackend& backend, const FixerConfig& config) {
    SampleFix out;
    out.sample_id = sample.id;
    try {
        const auto loc_b = tokenize(sample.buggy, TokenizerId::Loc);
        const auto loc_f = tokenize(sample.fixed, TokenizerId::Loc);
        if (loc_b.texts() != loc_f.texts()) out.truth_loc = extract_region(loc_b, loc_f).region();

        const auto fix = tokenize(sample.buggy, TokenizerId::Fix);
        BugRegion region;
        if (config.use_oracle_regions) {
            region = extract_region(fix, tokenize(sample.fixed, TokenizerId::Fix)).region();
        } else {
            if (!localizer) fail(ErrorKind::Precondition, "no localizer loaded and oracle regions are off");
            const auto pred = predict_regions(*localizer, sample, config.use_line_mask, config.use_comment);
            out.predicted_loc = pred.loc;
            region = pred.fix;
            if (adjuster) region = shift_region(region, adjuster->adjust(fix, static_cast<std::size_t>(region.start)));
        }
        out.prompt_region = region;

        const auto decomp = decompose_at(fix, region);
        const auto prompt = build_prompt(config.style, fix, decomp,
                                         config.prompt_comment ? sample.comment : std::nullopt);
        GenerationRequest req;
        req.prompt_text = prompt.text;
        req.n = config.budget;
        req.max_new_tokens = config.max_new_tokens;
        req.temperature = config.temperature;
        req.stop = prompt.stop_markers;
        req.seed = mix64(config.seed) ^ fnv1a64(sample.id);

        std::vector<CandidatePatch> candidates;
        for (const auto& c : generate(backend, req)) {
            CandidatePatch p;
            p.sample_id = sample.id;
            p.fixed_function = completion_to_fix(prompt, c.text);
            p.raw_completion = c.text;
            p.score = c.score;
            p.backend_id = backend.id();
            candidates.push_back(std::move(p));
        }
        out.candidates = rank_candidates(std::move(candidates));
    } catch (const Error& e) {
        out.candidates.clear();
        out.error = e.what();
        log_warn(sample.id + ": " + e.what());
    }
    return out;
}

std::vector<SampleFix> fix_all(const std::vector<BugFixSample>& samples, const Localizer* localizer,
                               const Adjuster* adjuster, const CompletionBackend& backend,
                               const FixerConfig& config) {
    std::vector<SampleFix> out(samples.size());
    parallel_for(samples.size(), config.max_in_flight, [&](std::size_t i) {
        out[i] = fix_sample(samples[i], localizer, adjuster, backend, config);
    });
    return out;
}

namespace {

nlohmann::json region_json(const std::optional<BugRegion>& r) {
    if (!r) return nullptr;
    return {{"start", r->start}, {"end", r->end}, {"tokenizer", to_string(r->tokenizer)}};
}

std::optional<BugRegion> region_from_json(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    BugRegion r;
    r.start = j.at("start").get<std::ptrdiff_t>();
    r.end = j.at("end").get<std::ptrdiff_t>();
    r.tokenizer = tokenizer_from_string(j.at("tokenizer").get<std::string>());
    return r;
}

template <typename F>
void for_each_record(const std::string& path, F&& fn) {
    std::istringstream in(read_file(path));
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            fn(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::Schema, path + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const Error& e) {
            fail(ErrorKind::Schema, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

}  // namespace

nlohmann::json to_json(const SampleFix& s) {
    return {{"sample_id", s.sample_id},
            {"predicted_loc", region_json(s.predicted_loc)},
            {"truth_loc", region_json(s.truth_loc)},
            {"prompt_region", region_json(s.prompt_region)},
            {"candidates", s.candidates.size()},
            {"error", s.error ? nlohmann::json(*s.error) : nlohmann::json(nullptr)}};
}

SampleFix sample_fix_from_json(const nlohmann::json& j) {
    SampleFix s;
    s.sample_id = j.at("sample_id").get<std::string>();
    s.predicted_loc = region_from_json(j.at("predicted_loc"));
    s.truth_loc = region_from_json(j.at("truth_loc"));
    s.prompt_region = region_from_json(j.at("prompt_region"));
    if (!j.at("error").is_null()) s.error = j.at("error").get<std::string>();
    return s;
}

void write_fixes(const std::string& path, const std::vector<SampleFix>& fixes) {
    std::string out;
    for (const auto& f : fixes) out += to_json(f).dump() + "\n";
    write_file(path, out);
}

void write_candidates(const std::string& path, const std::vector<SampleFix>& fixes) {
    std::string out;
    for (const auto& f : fixes)
        for (const auto& c : f.candidates) out += to_json(c).dump() + "\n";
    write_file(path, out);
}

std::vector<SampleFix> load_fixes(const std::string& fixes_path, const std::string& candidates_path) {
    std::vector<SampleFix> fixes;
    std::map<std::string, std::size_t> index;
    for_each_record(fixes_path, [&](const nlohmann::json& j) {
        auto s = sample_fix_from_json(j);
        if (!index.emplace(s.sample_id, fixes.size()).second)
            fail(ErrorKind::Schema, "duplicate sample id " + s.sample_id);
        fixes.push_back(std::move(s));
    });
    for_each_record(candidates_path, [&](const nlohmann::json& j) {
        auto c = candidate_from_json(j);
        const auto it = index.find(c.sample_id);
        if (it == index.end()) fail(ErrorKind::Schema, "candidate for unknown sample " + c.sample_id);
        auto& list = fixes[it->second].candidates;
        if (c.rank != static_cast<int>(list.size()) + 1)
            fail(ErrorKind::Schema, "candidate ranks for " + c.sample_id + " are not 1..k in order");
        list.push_back(std::move(c));
    });
    return fixes;
}

}  // namespace tokfix
