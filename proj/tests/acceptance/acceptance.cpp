#include "tokfix/backend.hpp"
#include "tokfix/eval.hpp"
#include "tokfix/fixer.hpp"
#include "tokfix/log.hpp"
#include "tokfix/pipeline.hpp"
#include "tokfix/prompts.hpp"
#include "tokfix/region.hpp"
#include "tokfix/synthetic.hpp"
#include "tokfix/util.hpp"

#include <gradcheck.hpp>
#include <oracles.hpp>

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace tokfix;
using nlohmann::json;

namespace {

struct Outcome {
    bool ok = false;
    std::string detail;
};

int failures = 0;

void criterion(const std::string& name, double limit_s, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = fn();
    } catch (const std::exception& e) {
        o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = o.ok && secs < limit_s;
    failures += !pass;
    std::printf("%s  %s  [%s; %.2f s of %.0f s]\n", pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs,
                limit_s);
    std::fflush(stdout);
}

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string sci(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2e", v);
    return buf;
}

std::vector<BugFixSample> corpus_of(int n, std::uint64_t seed) {
    MutationSpec spec;
    spec.functions_per_corpus = n;
    spec.seed = seed;
    return generate_corpus(spec);
}

struct Workdir {
    std::filesystem::path path;
    explicit Workdir(const std::string& name)
        : path(std::filesystem::temp_directory_path() / ("tokfix_acceptance_" + name)) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~Workdir() { std::filesystem::remove_all(path); }
    std::string str() const { return path.string(); }
};

double standard_error(double a, double b, std::size_t n) {
    const double m = static_cast<double>(n);
    return std::sqrt(a * (1.0 - a) / m + b * (1.0 - b) / m);
}

const std::vector<PromptStyle> kStyles = {PromptStyle::P1, PromptStyle::P2, PromptStyle::P3, PromptStyle::P4};

Outcome region_oracle() {
    std::mt19937_64 rng(7);
    int checked = 0, agree = 0;
    while (checked < 1000) {
        const auto [b, f] = testing::random_pair(rng, 64);
        const auto tb = tokenize(b, TokenizerId::Fix);
        const auto tf = tokenize(f, TokenizerId::Fix);
        if (tb.texts() == tf.texts() || tb.size() > 64 || tf.size() > 64) continue;
        const auto want = testing::brute_force_region(tb.texts(), tf.texts());
        const auto d = extract_region(tb, tf, false);
        ++checked;
        agree += d.raw_prefix() == want.p && d.raw_suffix() == want.s;
    }
    return {agree == checked, std::to_string(agree) + "/" + std::to_string(checked) + " pairs agree"};
}

Outcome prompt_round_trip() {
    int ok = 0, total = 0;
    for (const auto& s : corpus_of(5000, 11)) {
        const auto b = tokenize(s.buggy, TokenizerId::Fix);
        const auto d = extract_region(b, tokenize(s.fixed, TokenizerId::Fix));
        for (auto style : kStyles) {
            const auto p = build_prompt(style, b, d);
            ++total;
            ok += exact_match(completion_to_fix(p, *p.expected_target), s.fixed);
        }
    }
    return {ok == total && total == 20000, std::to_string(ok) + "/" + std::to_string(total) + " reconstructions"};
}

Outcome target_order() {
    int ok = 0, total = 0;
    for (const auto& s : corpus_of(5000, 11)) {
        const auto b = tokenize(s.buggy, TokenizerId::Fix);
        const auto d = extract_region(b, tokenize(s.fixed, TokenizerId::Fix));
        std::vector<std::size_t> len;
        for (auto style : kStyles)
            len.push_back(tokenize(*build_prompt(style, b, d).expected_target, TokenizerId::Fix).size());
        ++total;
        ok += len[3] <= len[2] && len[2] == len[1] && len[1] <= len[0];
    }
    return {ok == total, std::to_string(ok) + "/" + std::to_string(total) + " samples ordered"};
}

Outcome gradient_check() {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) worst = std::max(worst, testing::localizer_gradient_error(seed));
    return {worst <= 1e-4, "worst relative error " + sci(worst) + " over 100 instances"};
}

/// Trains on the train split and evaluates on validation; returns loc_report.json.
json localizer_report(const std::string& dir, const std::string& tag, bool line_mask) {
    Run run(resolve_run_config(std::nullopt, {"output_dir=" + dir,
                                              "synthetic.functions_per_corpus=5000",
                                              "eval.split=validation",
                                              "localizer.use_line_mask=" + std::string(line_mask ? "true" : "false"),
                                              "paths.localizer=localizer_" + tag + ".json",
                                              "paths.loc_report=loc_report_" + tag + ".json",
                                              "paths.predictions=predictions_" + tag + ".jsonl"}));
    if (!std::filesystem::exists(run.path("corpus"))) {
        run.gen_synthetic();
        run.split();
    }
    run.train_loc();
    const int rc = run.eval_loc();
    auto rep = json::parse(read_file(run.path("loc_report")));
    rep["exit_code"] = rc;
    return rep;
}

}  // namespace

int main() {
    set_log_level(LogLevel::Quiet);

    criterion("region oracle agrees with brute force on 1000 random pairs", 10, region_oracle);
    criterion("prompt round trip on 5000 samples x P1-P4", 30, prompt_round_trip);
    criterion("target lengths satisfy P4 <= P3 = P2 <= P1", 10, target_order);
    criterion("localizer gradients match central differences", 60, gradient_check);

    Workdir loc_dir("localizer");
    json plain, masked;
    criterion("localizer validation accuracy on 5000 samples", 300, [&]() -> Outcome {
        plain = localizer_report(loc_dir.str(), "plain", false);
        const double start = plain["loc_start_acc"].get<double>();
        const double both = plain["loc_both_acc"].get<double>();
        return {start >= 0.90 && both >= 0.80, "start " + fmt(start) + ", both " + fmt(both) + " on " +
                                                   std::to_string(plain["n"].get<int>()) + " samples"};
    });
    criterion("line mask raises start accuracy", 300, [&]() -> Outcome {
        masked = localizer_report(loc_dir.str(), "masked", true);
        const double a = plain.value("loc_start_acc", 0.0);
        const double b = masked["loc_start_acc"].get<double>();
        return {b > a, "masked " + fmt(b) + " vs unmasked " + fmt(a)};
    });
    criterion("localization invariants hold with exit code 0 and a violating row is flagged", 10, [&]() -> Outcome {
        bool ok = true;
        std::string detail;
        for (const auto* r : {&plain, &masked}) {
            if (r->is_null() || !r->contains("loc_both_acc")) return {false, "localizer reports missing"};
            const double s = (*r)["loc_start_acc"], e = (*r)["loc_end_acc"], b = (*r)["loc_both_acc"],
                         p = (*r)["loc_partial_acc"];
            ok = ok && b <= std::min(s, e) && p >= b && (*r)["exit_code"] == 0 &&
                 (*r)["invariant_violations"].empty();
        }
        EvalReport bad;
        bad.localization = LocalizationAccuracy{0.5, 0.4, 0.45, 0.3, 10};
        const auto flagged = check_invariants(bad);
        ok = ok && flagged.size() == 2;
        detail = "both reports consistent, fabricated row flagged " + std::to_string(flagged.size()) + " times";
        return {ok, detail};
    });

    const auto corpus = corpus_of(5000, 11);
    criterion("ground-truth regions with the echo oracle give EM 1.0 for P1-P4", 60, [&]() -> Outcome {
        const EchoOracleBackend echo(corpus);
        std::string detail;
        bool ok = true;
        for (auto style : kStyles) {
            FixerConfig cfg;
            cfg.style = style;
            cfg.budget = 1;
            cfg.use_oracle_regions = true;
            cfg.max_in_flight = 8;
            std::size_t em = 0;
            const auto fixes = fix_all(corpus, nullptr, nullptr, echo, cfg);
            for (std::size_t i = 0; i < fixes.size(); ++i)
                em += !fixes[i].candidates.empty() && exact_match(fixes[i].candidates[0].fixed_function, corpus[i].fixed);
            ok = ok && em == corpus.size();
            detail += std::string(detail.empty() ? "" : ", ") + to_string(style) + " " + std::to_string(em) + "/" +
                      std::to_string(corpus.size());
        }
        return {ok, detail};
    });

    criterion("noisy completions rank P4 > P3 > P1 by more than 3 standard errors", 120, [&]() -> Outcome {
        const NoisyLengthBackend noisy(corpus, 0.02, 5);
        std::map<PromptStyle, double> em;
        for (auto style : {PromptStyle::P1, PromptStyle::P3, PromptStyle::P4}) {
            FixerConfig cfg;
            cfg.style = style;
            cfg.budget = 1;
            cfg.use_oracle_regions = true;
            cfg.max_in_flight = 8;
            std::size_t hits = 0;
            const auto fixes = fix_all(corpus, nullptr, nullptr, noisy, cfg);
            for (std::size_t i = 0; i < fixes.size(); ++i)
                hits += !fixes[i].candidates.empty() && exact_match(fixes[i].candidates[0].fixed_function, corpus[i].fixed);
            em[style] = static_cast<double>(hits) / static_cast<double>(corpus.size());
        }
        const double p1 = em[PromptStyle::P1], p3 = em[PromptStyle::P3], p4 = em[PromptStyle::P4];
        const double z43 = (p4 - p3) / standard_error(p4, p3, corpus.size());
        const double z31 = (p3 - p1) / standard_error(p3, p1, corpus.size());
        return {z43 > 3.0 && z31 > 3.0, "P1 " + fmt(p1) + ", P3 " + fmt(p3) + ", P4 " + fmt(p4) + "; gaps " +
                                            fmt(z43, 1) + " and " + fmt(z31, 1) + " standard errors"};
    });

    Workdir camel_dir("camel");
    criterion("start adjustment raises EM on the camelCase corpus by at least 1 point", 600, [&]() -> Outcome {
        const std::vector<std::string> base = {"output_dir=" + camel_dir.str(), "synthetic.preset=camel_case",
                                               "synthetic.functions_per_corpus=5000", "fixer.budget=1"};
        Run plain_run(resolve_run_config(std::nullopt, base));
        plain_run.gen_synthetic();
        plain_run.split();
        plain_run.train_loc();
        plain_run.fix();
        plain_run.evaluate();
        auto adjusted = base;
        for (const char* o : {"adjuster.enabled=true", "paths.fixes=fixes_adj.jsonl",
                              "paths.candidates=candidates_adj.jsonl", "paths.report=report_adj.json",
                              "paths.report_table=report_adj.txt"})
            adjusted.emplace_back(o);
        Run adj_run(resolve_run_config(std::nullopt, adjusted));
        adj_run.collect_adjust();
        adj_run.train_adjust();
        adj_run.fix();
        adj_run.evaluate();
        const double before = json::parse(read_file(plain_run.path("report")))["em_accuracy"].get<double>();
        const double after = json::parse(read_file(adj_run.path("report")))["em_accuracy"].get<double>();
        return {after - before >= 0.01, "EM " + fmt(before) + " -> " + fmt(after)};
    });

    criterion("top-K counts never decrease and three 70-completion runs merge to at most 210", 120, [&]() -> Outcome {
        const std::vector<BugFixSample> bugs(corpus.begin(), corpus.begin() + 500);
        const NoisyLengthBackend noisy(bugs, 0.1, 9);
        std::vector<std::vector<SampleFix>> runs;
        for (auto style : {PromptStyle::P1, PromptStyle::P3, PromptStyle::P4}) {
            FixerConfig cfg;
            cfg.style = style;
            cfg.budget = 70;
            cfg.use_oracle_regions = true;
            cfg.max_in_flight = 8;
            runs.push_back(fix_all(bugs, nullptr, nullptr, noisy, cfg));
        }
        std::vector<SampleOutcome> outcomes;
        std::size_t largest = 0;
        for (std::size_t i = 0; i < bugs.size(); ++i) {
            SampleOutcome o;
            o.id = bugs[i].id;
            o.fixed = bugs[i].fixed;
            o.candidates = merge_candidates({runs[0][i].candidates, runs[1][i].candidates, runs[2][i].candidates});
            largest = std::max(largest, o.candidates.size());
            outcomes.push_back(std::move(o));
        }
        const auto report = evaluate("merged", outcomes, {10, 30, 50, 100, 200}, json::object());
        std::ostringstream curve;
        for (const auto& [k, c] : report.topk) curve << (k == 10 ? "" : " ") << k << ":" << c;
        return {check_invariants(report).empty() && largest <= 210,
                "curve " + curve.str() + ", largest list " + std::to_string(largest)};
    });

    Workdir cli_dir("cli");
    criterion("two pipeline runs write byte-identical reports", 300, [&]() -> Outcome {
        std::vector<std::string> reports, tables;
        for (const char* name : {"a", "b"}) {
            const auto out = (cli_dir.path / name).string();
            const std::string cmd = std::string("\"") + TOKFIX_CLI + "\" -q -s output_dir=" + out + " pipeline >" +
                                    out + ".stdout 2>&1";
            const int status = std::system(cmd.c_str());
            if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) return {false, "pipeline run failed"};
            reports.push_back(read_file(out + "/report.json"));
            tables.push_back(read_file(out + "/report.txt"));
        }
        return {reports[0] == reports[1] && tables[0] == tables[1],
                "report.json " + std::to_string(reports[0].size()) + " bytes, " +
                    (reports[0] == reports[1] ? "identical" : "different")};
    });

    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
