#include "tokfix/error.hpp"
#include "tokfix/eval.hpp"
#include "tokfix/fixer.hpp"
#include "tokfix/synthetic.hpp"
#include "tokfix/util.hpp"

#include <doctest.h>
#include <oracles.hpp>

#include <filesystem>

using namespace tokfix;
using testing::kConfigBuggy;
using testing::kConfigFixed;
using testing::kDialogBuggy;
using testing::kDialogFixed;
using testing::make_sample;

namespace {

CandidatePatch cand(const std::string& fn, std::optional<double> score = std::nullopt) {
    CandidatePatch c;
    c.sample_id = "s";
    c.fixed_function = fn;
    c.raw_completion = fn;
    c.score = score;
    return c;
}

std::vector<std::string> functions(const std::vector<CandidatePatch>& l) {
    std::vector<std::string> out;
    for (const auto& c : l) out.push_back(c.fixed_function);
    return out;
}

FixerConfig oracle_config(PromptStyle style) {
    FixerConfig c;
    c.style = style;
    c.budget = 1;
    c.use_oracle_regions = true;
    return c;
}

class ThrowingBackend : public CompletionBackend {
public:
    std::string id() const override { return "throwing"; }
    std::vector<Completion> complete(const GenerationRequest&) const override {
        fail(ErrorKind::RemoteUnavailable, "backend down");
    }
};

}  // namespace

TEST_CASE("ranking drops duplicates and compacts ranks") {
    const auto ranked = rank_candidates({cand("a;"), cand("b;"), cand("a ;"), cand("c;")});
    CHECK(functions(ranked) == std::vector<std::string>{"a;", "b;", "c;"});
    for (std::size_t i = 0; i < ranked.size(); ++i) CHECK(ranked[i].rank == static_cast<int>(i) + 1);
    CHECK(rank_candidates({}).empty());
}

TEST_CASE("ranking sorts by score only when every candidate has one") {
    const auto scored = rank_candidates({cand("a;", -2.0), cand("b;", -0.5), cand("c;", -1.0), cand("b ;", -0.1)});
    CHECK(functions(scored) == std::vector<std::string>{"b ;", "c;", "a;"});
    const auto mixed = rank_candidates({cand("a;", -2.0), cand("b;"), cand("c;", 0.0)});
    CHECK(functions(mixed) == std::vector<std::string>{"a;", "b;", "c;"});
}

TEST_CASE("merging interleaves by rank") {
    const auto a = rank_candidates({cand("a1;"), cand("a2;"), cand("a3;")});
    const auto b = rank_candidates({cand("b1;"), cand("a1 ;")});
    const auto m = merge_candidates({a, b});
    CHECK(functions(m) == std::vector<std::string>{"a1;", "b1;", "a2;", "a3;"});
    CHECK(m.back().rank == 4);
    CHECK(merge_candidates({}).empty());
}

TEST_CASE("oracle regions with the echo backend fix every style") {
    const std::vector<BugFixSample> samples = {make_sample("config", kConfigBuggy, kConfigFixed),
                                               make_sample("dialog", kDialogBuggy, kDialogFixed)};
    const EchoOracleBackend echo(samples);
    for (auto style : {PromptStyle::P1, PromptStyle::P2, PromptStyle::P3, PromptStyle::P4}) {
        for (const auto& s : samples) {
            const auto r = fix_sample(s, nullptr, nullptr, echo, oracle_config(style));
            CHECK_FALSE(r.error);
            REQUIRE(r.candidates.size() == 1);
            CHECK(exact_match(r.candidates[0].fixed_function, s.fixed));
            CHECK(r.candidates[0].rank == 1);
            CHECK(r.candidates[0].backend_id == "echo_oracle");
            CHECK(r.truth_loc);
            CHECK_FALSE(r.predicted_loc);
            REQUIRE(r.prompt_region);
            CHECK(r.prompt_region->tokenizer == TokenizerId::Fix);
        }
    }
}

TEST_CASE("errors are captured per sample") {
    const auto s = make_sample("config", kConfigBuggy, kConfigFixed);
    const auto down = fix_sample(s, nullptr, nullptr, ThrowingBackend{}, oracle_config(PromptStyle::P3));
    REQUIRE(down.error);
    CHECK(down.error->find("backend down") != std::string::npos);
    CHECK(down.candidates.empty());

    auto cfg = oracle_config(PromptStyle::P3);
    cfg.use_oracle_regions = false;
    const auto no_loc = fix_sample(s, nullptr, nullptr, EchoOracleBackend({s}), cfg);
    CHECK(no_loc.error);

    const auto same = fix_sample(make_sample("same", "a;", "a ;"), nullptr, nullptr, EchoOracleBackend({}),
                                 oracle_config(PromptStyle::P3));
    CHECK(same.error);
}

TEST_CASE("fix_all keeps corpus order and is independent of concurrency") {
    MutationSpec spec;
    spec.functions_per_corpus = 60;
    const auto samples = generate_corpus(spec);
    const NoisyLengthBackend noisy(samples, 0.1, 3);
    auto cfg = oracle_config(PromptStyle::P3);
    cfg.budget = 5;
    cfg.max_in_flight = 1;
    const auto serial = fix_all(samples, nullptr, nullptr, noisy, cfg);
    cfg.max_in_flight = 8;
    const auto parallel = fix_all(samples, nullptr, nullptr, noisy, cfg);
    REQUIRE(serial.size() == samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        CHECK(serial[i].sample_id == samples[i].id);
        CHECK(serial[i].candidates == parallel[i].candidates);
        CHECK(serial[i].candidates.size() <= 5);
    }
}

TEST_CASE("fixes and candidates round trip through files") {
    const std::vector<BugFixSample> samples = {make_sample("config", kConfigBuggy, kConfigFixed),
                                               make_sample("dialog", kDialogBuggy, kDialogFixed)};
    auto cfg = oracle_config(PromptStyle::P3);
    cfg.budget = 4;
    auto fixes = fix_all(samples, nullptr, nullptr, NoisyLengthBackend(samples, 0.3, 1), cfg);
    fixes.push_back(fix_sample(samples[0], nullptr, nullptr, ThrowingBackend{}, cfg));
    fixes.back().sample_id = "broken";

    const auto dir = std::filesystem::temp_directory_path() / "tokfix_fixer_test";
    std::filesystem::create_directories(dir);
    const auto fpath = (dir / "fixes.jsonl").string();
    const auto cpath = (dir / "candidates.jsonl").string();
    write_fixes(fpath, fixes);
    write_candidates(cpath, fixes);
    const auto back = load_fixes(fpath, cpath);
    REQUIRE(back.size() == fixes.size());
    for (std::size_t i = 0; i < fixes.size(); ++i) {
        CHECK(back[i].sample_id == fixes[i].sample_id);
        CHECK(back[i].candidates == fixes[i].candidates);
        CHECK(back[i].truth_loc == fixes[i].truth_loc);
        CHECK(back[i].prompt_region == fixes[i].prompt_region);
        CHECK(back[i].error == fixes[i].error);
    }

    write_file(cpath, to_json(CandidatePatch{"ghost", 1, "x", "x", std::nullopt, "m"}).dump() + "\n");
    CHECK_THROWS_AS(load_fixes(fpath, cpath), Error);
    write_file(cpath, to_json(CandidatePatch{"config", 2, "x", "x", std::nullopt, "m"}).dump() + "\n");
    CHECK_THROWS_AS(load_fixes(fpath, cpath), Error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("fixer config parsing") {
    FixerConfig c;
    c.style = PromptStyle::P4;
    c.budget = 200;
    const auto back = fixer_config_from_json(to_json(c));
    CHECK(back.style == PromptStyle::P4);
    CHECK(back.budget == 200);
    CHECK_THROWS_AS(fixer_config_from_json({{"style", "P5"}}), Error);
    CHECK_THROWS_AS(fixer_config_from_json({{"budget", 0}}), Error);
    CHECK_THROWS_AS(fixer_config_from_json({{"temperature", -1.0}}), Error);
    CHECK_THROWS_AS(fixer_config_from_json({{"max_in_flight", 0}}), Error);
}
