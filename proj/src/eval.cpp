#include "tokfix/eval.hpp"

#include "tokfix/error.hpp"
#include "tokfix/tokenizer.hpp"
#include "tokfix/util.hpp"

#include <algorithm>
#include <sstream>

namespace tokfix {

std::string normalized_key(const std::string& code) {
    std::string key;
    const auto tf = tokenize(code, TokenizerId::Fix);
    for (const auto& t : tf.tokens()) {
        key += t.text;
        key += '\x1f';
    }
    return key;
}

bool exact_match(const std::string& candidate, const std::string& ground_truth, bool raw) {
    if (raw) return candidate == ground_truth;
    return normalized_key(candidate) == normalized_key(ground_truth);
}

std::optional<LocalizationAccuracy> localization_accuracies(
    const std::vector<std::pair<BugRegion, BugRegion>>& predictions) {
    if (predictions.empty()) return std::nullopt;
    std::size_t start = 0, end = 0, both = 0, partial = 0;
    for (const auto& [pred, truth] : predictions) {
        if (pred.tokenizer != truth.tokenizer)
            fail(ErrorKind::TokenizerMismatch, "predicted and true regions use different tokenizers");
        const bool s = pred.start == truth.start;
        const bool e = pred.end == truth.end;
        start += s;
        end += e;
        both += s && e;
        partial += pred.start <= truth.start && pred.end >= truth.end;
    }
    const double n = static_cast<double>(predictions.size());
    LocalizationAccuracy acc;
    acc.start = static_cast<double>(start) / n;
    acc.end = static_cast<double>(end) / n;
    acc.both = static_cast<double>(both) / n;
    acc.partial = static_cast<double>(partial) / n;
    acc.n = predictions.size();
    return acc;
}

namespace {

std::optional<int> first_correct(const std::vector<CandidatePatch>& candidates, const std::string& truth,
                                 bool raw) {
    const std::string key = raw ? truth : normalized_key(truth);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto& f = candidates[i].fixed_function;
        if (raw ? f == key : normalized_key(f) == key) return static_cast<int>(i) + 1;
    }
    return std::nullopt;
}

}  // namespace

std::map<int, int> topk_curve(const std::vector<std::vector<CandidatePatch>>& candidates,
                              const std::vector<std::string>& truths, const std::vector<int>& ks,
                              bool raw) {
    if (candidates.size() != truths.size())
        fail(ErrorKind::InvalidArgument, "topk_curve: candidate lists and truths differ in length");
    std::vector<std::optional<int>> first(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) first[i] = first_correct(candidates[i], truths[i], raw);
    std::map<int, int> out;
    for (int k : ks) {
        int count = 0;
        for (const auto& f : first) count += f && *f <= k;
        out[k] = count;
    }
    return out;
}

std::string config_fingerprint(const nlohmann::json& config) { return hex64(fnv1a64(config.dump())); }

EvalReport evaluate(const std::string& corpus_id, const std::vector<SampleOutcome>& outcomes,
                    const std::vector<int>& ks, const nlohmann::json& config, bool raw) {
    EvalReport r;
    r.corpus_id = corpus_id;
    r.n_samples = outcomes.size();
    r.config_fingerprint = config_fingerprint(config);

    std::vector<std::pair<BugRegion, BugRegion>> regions;
    std::size_t em = 0;
    std::vector<std::vector<CandidatePatch>> lists;
    std::vector<std::string> truths;
    for (const auto& o : outcomes) {
        SampleVerdict v;
        v.id = o.id;
        v.first_correct_rank = first_correct(o.candidates, o.fixed, raw);
        v.exact_match = v.first_correct_rank == 1;
        v.candidates = o.candidates.size();
        v.predicted = o.predicted;
        v.truth = o.truth;
        v.error = o.error;
        em += v.exact_match;
        if (o.predicted && o.truth) regions.emplace_back(*o.predicted, *o.truth);
        lists.push_back(o.candidates);
        truths.push_back(o.fixed);
        r.per_sample.push_back(std::move(v));
    }
    if (r.n_samples > 0) {
        r.em_accuracy = static_cast<double>(em) / static_cast<double>(r.n_samples);
        r.topk = topk_curve(lists, truths, ks, raw);
    }
    r.localization = localization_accuracies(regions);
    return r;
}

std::vector<std::string> check_invariants(const EvalReport& r) {
    std::vector<std::string> bad;
    if (r.localization) {
        const auto& a = *r.localization;
        if (a.both > std::min(a.start, a.end)) bad.push_back("loc_both_acc exceeds min(loc_start_acc, loc_end_acc)");
        if (a.partial < a.both) bad.push_back("loc_partial_acc is below loc_both_acc");
    }
    std::optional<int> prev;
    for (const auto& [k, count] : r.topk) {
        if (prev && count < *prev) bad.push_back("top-" + std::to_string(k) + " count decreases");
        prev = count;
    }
    return bad;
}

namespace {

nlohmann::json region_json(const std::optional<BugRegion>& r) {
    if (!r) return nullptr;
    return {{"start", r->start}, {"end", r->end}, {"tokenizer", to_string(r->tokenizer)}};
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::string cell(const nlohmann::json& v) { return v.is_null() ? "-" : v.dump(); }

}  // namespace

nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json j;
    j["corpus_id"] = r.corpus_id;
    j["n_samples"] = r.n_samples;
    j["em_accuracy"] = opt(r.em_accuracy);
    const auto& loc = r.localization;
    j["loc_start_acc"] = loc ? nlohmann::json(loc->start) : nlohmann::json(nullptr);
    j["loc_end_acc"] = loc ? nlohmann::json(loc->end) : nlohmann::json(nullptr);
    j["loc_both_acc"] = loc ? nlohmann::json(loc->both) : nlohmann::json(nullptr);
    j["loc_partial_acc"] = loc ? nlohmann::json(loc->partial) : nlohmann::json(nullptr);
    j["loc_n"] = loc ? loc->n : 0;
    nlohmann::json topk = nlohmann::json::object();
    for (const auto& [k, count] : r.topk) topk[std::to_string(k)] = count;
    j["topk"] = r.n_samples > 0 ? topk : nlohmann::json(nullptr);
    j["config_fingerprint"] = r.config_fingerprint;
    auto per = nlohmann::json::array();
    for (const auto& v : r.per_sample) {
        per.push_back({{"id", v.id},
                       {"exact_match", v.exact_match},
                       {"first_correct_rank", v.first_correct_rank ? nlohmann::json(*v.first_correct_rank)
                                                                   : nlohmann::json(nullptr)},
                       {"candidates", v.candidates},
                       {"predicted", region_json(v.predicted)},
                       {"truth", region_json(v.truth)},
                       {"error", v.error ? nlohmann::json(*v.error) : nlohmann::json(nullptr)}});
    }
    j["per_sample"] = std::move(per);
    return j;
}

std::string render_machine(const EvalReport& r) { return to_json(r).dump(2) + "\n"; }

std::string render_table(const EvalReport& r) {
    const auto j = to_json(r);
    std::vector<std::pair<std::string, std::string>> cols = {
        {"corpus", r.corpus_id.empty() ? "-" : r.corpus_id},
        {"n", std::to_string(r.n_samples)},
        {"EM", cell(j["em_accuracy"])},
        {"Start", cell(j["loc_start_acc"])},
        {"End", cell(j["loc_end_acc"])},
        {"Both", cell(j["loc_both_acc"])},
        {"Partial", cell(j["loc_partial_acc"])},
    };
    for (const auto& [k, count] : r.topk) cols.emplace_back("Top-" + std::to_string(k), std::to_string(count));
    for (auto& [name, value] : cols) std::replace(value.begin(), value.end(), ' ', '_');

    std::ostringstream head, row;
    for (std::size_t i = 0; i < cols.size(); ++i) {
        const auto width = std::max(cols[i].first.size(), cols[i].second.size()) + 2;
        head << cols[i].first << std::string(i + 1 < cols.size() ? width - cols[i].first.size() : 0, ' ');
        row << cols[i].second << std::string(i + 1 < cols.size() ? width - cols[i].second.size() : 0, ' ');
    }
    return head.str() + "\n" + row.str() + "\n";
}

std::map<std::string, std::optional<double>> parse_table(const std::string& table) {
    std::istringstream in(table);
    std::string head_line, row_line;
    std::getline(in, head_line);
    std::getline(in, row_line);
    std::istringstream hs(head_line), rs(row_line);
    std::map<std::string, std::optional<double>> out;
    std::string name, value;
    while (hs >> name && rs >> value) {
        if (name == "corpus") continue;
        out[name] = value == "-" ? std::nullopt : std::optional<double>(std::stod(value));
    }
    return out;
}

}  // namespace tokfix
