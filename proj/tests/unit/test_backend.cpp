#include "tokfix/backend.hpp"
#include "tokfix/error.hpp"
#include "tokfix/eval.hpp"
#include "tokfix/prompts.hpp"
#include "tokfix/region.hpp"
#include "tokfix/synthetic.hpp"
#include "tokfix/util.hpp"

#include <doctest.h>
#include <oracles.hpp>

#include <cmath>
#include <filesystem>

using namespace tokfix;
using testing::kConfigBuggy;
using testing::kConfigFixed;
using testing::kDialogBuggy;
using testing::kDialogFixed;
using testing::make_sample;

namespace {

RepairPrompt oracle_prompt(PromptStyle style, const BugFixSample& s) {
    const auto b = tokenize(s.buggy, TokenizerId::Fix);
    const auto d = extract_region(b, tokenize(s.fixed, TokenizerId::Fix));
    return build_prompt(style, b, d);
}

GenerationRequest request_for(const RepairPrompt& p, int n = 1) {
    GenerationRequest r;
    r.prompt_text = p.text;
    r.n = n;
    r.stop = p.stop_markers;
    r.seed = 3;
    return r;
}

class FixedBackend : public CompletionBackend {
public:
    explicit FixedBackend(std::vector<Completion> out) : out_(std::move(out)) {}
    std::string id() const override { return "fixed"; }
    std::vector<Completion> complete(const GenerationRequest&) const override { return out_; }

private:
    std::vector<Completion> out_;
};

}  // namespace

TEST_CASE("generate validates the request") {
    const FixedBackend b({{"x", std::nullopt}});
    GenerationRequest r;
    r.prompt_text = "p";
    r.stop = {"\n<sep>\n"};
    CHECK(generate(b, r).size() == 1);
    auto bad = r;
    bad.n = 0;
    CHECK_THROWS_AS(generate(b, bad), Error);
    bad = r;
    bad.stop.clear();
    CHECK_THROWS_AS(generate(b, bad), Error);
    bad = r;
    bad.max_new_tokens = 0;
    CHECK_THROWS_AS(generate(b, bad), Error);
    bad = r;
    bad.temperature = -0.1;
    CHECK_THROWS_AS(generate(b, bad), Error);
}

TEST_CASE("generate truncates at the earliest stop marker and caps n") {
    const FixedBackend b({{"a;<|endoftext|>junk", 1.0}, {"b;\n<sep>\nmore<|endoftext|>", 0.5}, {"c;", 0.1}});
    GenerationRequest r;
    r.prompt_text = "p";
    r.n = 2;
    r.stop = {"\n<sep>\n", "<|endoftext|>"};
    const auto out = generate(b, r);
    REQUIRE(out.size() == 2);
    CHECK(out[0].text == "a;");
    CHECK(out[1].text == "b;");
    CHECK(*out[1].score == 0.5);
}

TEST_CASE("mock table answers known prompts only") {
    const auto t = MockTableBackend::from_json(nlohmann::json::parse(
        R"([{"prompt": "p1", "completions": [{"text": "a", "score": -1.0}, {"text": "b"}]}])"));
    GenerationRequest r;
    r.prompt_text = "p1";
    r.n = 5;
    r.stop = {"<|endoftext|>"};
    const auto out = generate(t, r);
    REQUIRE(out.size() == 2);
    CHECK(out[0] == Completion{"a", -1.0});
    CHECK(out[1] == Completion{"b", std::nullopt});
    r.prompt_text = "p2";
    CHECK(generate(t, r).empty());
    CHECK_THROWS_AS(MockTableBackend::from_json(nlohmann::json::parse(R"([{"prompt": "p"}])")), Error);

    const auto path = (std::filesystem::temp_directory_path() / "tokfix_mock_table.json").string();
    write_file(path, "[not json");
    CHECK_THROWS_AS(MockTableBackend::load(path), Error);
    std::filesystem::remove(path);
}

TEST_CASE("echo oracle returns the target for every style") {
    const std::vector<BugFixSample> samples = {make_sample("config", kConfigBuggy, kConfigFixed),
                                               make_sample("dialog", kDialogBuggy, kDialogFixed)};
    const EchoOracleBackend echo(samples);
    for (const auto& s : samples) {
        for (auto style : {PromptStyle::P1, PromptStyle::P2, PromptStyle::P3, PromptStyle::P4}) {
            const auto p = oracle_prompt(style, s);
            const auto out = generate(echo, request_for(p));
            REQUIRE(out.size() == 1);
            CHECK(normalized_key(out[0].text) == normalized_key(*p.expected_target));
            CHECK(exact_match(completion_to_fix(p, out[0].text), s.fixed));
        }
    }
    CHECK(echo.oracle_completion(oracle_prompt(PromptStyle::P4, samples[0]).text) == "get");
}

TEST_CASE("echo oracle completes from a shifted cut") {
    const auto s = make_sample("config", kConfigBuggy, kConfigFixed);
    const EchoOracleBackend echo({s});
    const auto b = tokenize(s.buggy, TokenizerId::Fix);
    const auto truth = extract_region(b, tokenize(s.fixed, TokenizerId::Fix)).region();
    auto early = truth;
    early.start -= 3;
    const auto p = build_prompt(PromptStyle::P3, b, decompose_at(b, early));
    CHECK(exact_match(completion_to_fix(p, echo.oracle_completion(p.text)), s.fixed));

    auto late = truth;
    late.start += 2;
    late.end = std::max(late.end, late.start);
    const auto q = build_prompt(PromptStyle::P3, b, decompose_at(b, late));
    CHECK_FALSE(exact_match(completion_to_fix(q, echo.oracle_completion(q.text)), s.fixed));
}

TEST_CASE("echo oracle refuses unknown functions") {
    const EchoOracleBackend echo({make_sample("config", kConfigBuggy, kConfigFixed)});
    const auto p = oracle_prompt(PromptStyle::P3, make_sample("dialog", kDialogBuggy, kDialogFixed));
    CHECK_THROWS_AS(echo.oracle_completion(p.text), Error);
}

TEST_CASE("newline quirk answers a cut after a newline with a closing brace") {
    const auto s = make_sample("ins", "int f() {\n    return a;\n}\n", "int f() {\n    g();\n    return a;\n}\n");
    const auto b = tokenize(s.buggy, TokenizerId::Fix);
    const auto truth = extract_region(b, tokenize(s.fixed, TokenizerId::Fix)).region();
    REQUIRE(b[static_cast<std::size_t>(truth.start) - 1].text == "\n");
    const auto p = oracle_prompt(PromptStyle::P3, s);
    CHECK(EchoOracleBackend({s}, true).oracle_completion(p.text) == "}");
    CHECK(exact_match(completion_to_fix(p, EchoOracleBackend({s}).oracle_completion(p.text)), s.fixed));

    auto left = truth;
    left.start -= 1;
    const auto q = build_prompt(PromptStyle::P3, b, decompose_at(b, left));
    CHECK(exact_match(completion_to_fix(q, EchoOracleBackend({s}, true).oracle_completion(q.text)), s.fixed));
}

TEST_CASE("noisy length with zero noise is the oracle") {
    const auto s = make_sample("config", kConfigBuggy, kConfigFixed);
    const NoisyLengthBackend noisy({s}, 0.0, 5);
    const EchoOracleBackend echo({s});
    for (auto style : {PromptStyle::P1, PromptStyle::P3, PromptStyle::P4}) {
        const auto p = oracle_prompt(style, s);
        for (const auto& c : generate(noisy, request_for(p, 4))) CHECK(c.text == echo.oracle_completion(p.text));
    }
    CHECK_THROWS_AS(NoisyLengthBackend({s}, 1.5, 1), Error);
}

TEST_CASE("noisy length is deterministic per seed") {
    const auto s = make_sample("config", kConfigBuggy, kConfigFixed);
    const auto p = oracle_prompt(PromptStyle::P1, s);
    const auto a = generate(NoisyLengthBackend({s}, 0.3, 9), request_for(p, 8));
    const auto b = generate(NoisyLengthBackend({s}, 0.3, 9), request_for(p, 8));
    const auto c = generate(NoisyLengthBackend({s}, 0.3, 10), request_for(p, 8));
    CHECK(a == b);
    CHECK(a != c);
}

TEST_CASE("noisy length exact rate matches (1 - eps)^L within three standard errors") {
    MutationSpec spec;
    spec.functions_per_corpus = 2500;
    spec.seed = 17;
    const auto samples = generate_corpus(spec);
    const double eps = 0.05;
    const NoisyLengthBackend noisy(samples, eps, 2);
    double expected = 0.0, variance = 0.0;
    int hits = 0, total = 0;
    for (const auto& s : samples) {
        const auto p = oracle_prompt(PromptStyle::P3, s);
        const auto target = *p.expected_target;
        const double q = std::pow(1.0 - eps, static_cast<double>(tokenize(target, TokenizerId::Fix).size()));
        for (const auto& c : generate(noisy, request_for(p, 4))) {
            hits += c.text == target;
            ++total;
            expected += q;
            variance += q * (1.0 - q);
        }
    }
    CHECK(total == 10000);
    CHECK(std::abs(hits - expected) <= 3.0 * std::sqrt(variance));
}

TEST_CASE("backend config parsing and construction") {
    const auto c = backend_config_from_json({{"kind", "noisy_length"}, {"epsilon", 0.1}, {"seed", 4}});
    CHECK(c.kind == "noisy_length");
    CHECK(c.epsilon == 0.1);
    CHECK(backend_config_from_json(to_json(c)).seed == 4);
    CHECK(make_backend(c, {})->id() == "noisy_length");
    CHECK(make_backend(BackendConfig{}, {})->id() == "echo_oracle");
    CHECK_THROWS_AS(backend_config_from_json({{"kind", "gpt"}}), Error);
    CHECK_THROWS_AS(backend_config_from_json({{"epsilon", "high"}}), Error);
    BackendConfig http;
    http.kind = "http";
    CHECK_THROWS_AS(make_backend(http, {}), Error);
    http.endpoint = "http://127.0.0.1:1";
    CHECK(make_backend(http, {})->id() == "http");
    BackendConfig table;
    table.kind = "mock_table";
    CHECK_THROWS_AS(make_backend(table, {}), Error);
}

TEST_CASE("candidate records round trip") {
    CandidatePatch c{"s1", 2, "int f() {}", "{}", -0.5, "echo_oracle"};
    CHECK(candidate_from_json(to_json(c)) == c);
    c.score.reset();
    CHECK(candidate_from_json(to_json(c)) == c);
    CHECK_THROWS_AS(candidate_from_json({{"sample_id", "s"}}), Error);
}
