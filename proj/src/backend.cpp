#include "tokfix/backend.hpp"

#include "tokfix/error.hpp"
#include "tokfix/prompts.hpp"
#include "tokfix/tokenizer.hpp"
#include "tokfix/util.hpp"

namespace tokfix {

nlohmann::json to_json(const CandidatePatch& c) {
    return {{"sample_id", c.sample_id},
            {"rank", c.rank},
            {"fixed_function", c.fixed_function},
            {"raw_completion", c.raw_completion},
            {"score", c.score ? nlohmann::json(*c.score) : nlohmann::json(nullptr)},
            {"backend_id", c.backend_id}};
}

CandidatePatch candidate_from_json(const nlohmann::json& j) {
    CandidatePatch c;
    try {
        c.sample_id = j.at("sample_id").get<std::string>();
        c.rank = j.at("rank").get<int>();
        c.fixed_function = j.at("fixed_function").get<std::string>();
        c.raw_completion = j.at("raw_completion").get<std::string>();
        if (j.contains("score") && !j.at("score").is_null()) c.score = j.at("score").get<double>();
        c.backend_id = j.at("backend_id").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Schema, std::string("candidate record: ") + e.what());
    }
    return c;
}

std::vector<Completion> generate(const CompletionBackend& backend, const GenerationRequest& request) {
    if (request.n < 1) fail(ErrorKind::InvalidArgument, "generation request needs n >= 1");
    if (request.stop.empty()) fail(ErrorKind::InvalidArgument, "generation request needs a stop marker");
    if (request.max_new_tokens < 1) fail(ErrorKind::InvalidArgument, "max_new_tokens must be positive");
    if (!(request.temperature >= 0.0)) fail(ErrorKind::InvalidArgument, "temperature must be non-negative");
    auto out = backend.complete(request);
    if (out.size() > static_cast<std::size_t>(request.n)) out.resize(static_cast<std::size_t>(request.n));
    for (auto& c : out) c.text = truncate_at_stop(c.text, request.stop);
    return out;
}

MockTableBackend MockTableBackend::from_json(const nlohmann::json& j) {
    std::map<std::string, std::vector<Completion>> table;
    try {
        for (const auto& entry : j) {
            std::vector<Completion> completions;
            for (const auto& c : entry.at("completions")) {
                Completion comp;
                comp.text = c.at("text").get<std::string>();
                if (c.contains("score") && !c.at("score").is_null()) comp.score = c.at("score").get<double>();
                completions.push_back(std::move(comp));
            }
            table[entry.at("prompt").get<std::string>()] = std::move(completions);
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Schema, std::string("mock table: ") + e.what());
    }
    return MockTableBackend(std::move(table));
}

MockTableBackend MockTableBackend::load(const std::string& path) {
    try {
        return from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::Schema, path + ": " + e.what());
    }
}

std::vector<Completion> MockTableBackend::complete(const GenerationRequest& request) const {
    const auto it = table_.find(request.prompt_text);
    if (it == table_.end()) return {};
    return it->second;
}

EchoOracleBackend::EchoOracleBackend(const std::vector<BugFixSample>& samples, bool newline_quirk)
    : newline_quirk_(newline_quirk) {
    for (const auto& s : samples) fixes_.emplace(s.buggy, s.fixed);
}

namespace {

bool same_tokens(const TokenizedFunction& a, std::size_t a_from, const TokenizedFunction& b,
                 std::size_t b_from, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i)
        if (a[a_from + i].text != b[b_from + i].text) return false;
    return true;
}

}  // namespace

std::string EchoOracleBackend::oracle_completion(const std::string& prompt_text) const {
    const ParsedPrompt pp = parse_prompt(prompt_text);
    auto lookup = [&](const std::string& buggy) -> const std::string* {
        const auto it = fixes_.find(buggy);
        return it == fixes_.end() ? nullptr : &it->second;
    };

    const std::string* fixed = nullptr;
    std::string echo;
    switch (pp.style) {
        case PromptStyle::P1:
            fixed = lookup(pp.first);
            if (fixed) return *fixed;
            break;
        case PromptStyle::P2:
        case PromptStyle::P3:
            // P2 carries the whole buggy function, P3 only the part after the cut.
            if (pp.first.compare(0, pp.prefix.size(), pp.prefix) == 0 && (fixed = lookup(pp.first))) {
                echo = pp.first.substr(pp.prefix.size());
            } else if ((fixed = lookup(pp.prefix + pp.first))) {
                echo = pp.first;
            }
            break;
        case PromptStyle::P4:
            fixed = lookup(pp.prefix + pp.first + pp.suffix);
            echo = pp.first;
            break;
    }
    if (!fixed) fail(ErrorKind::Precondition, "oracle backend has no fix for this prompt");

    const auto f = tokenize(*fixed, TokenizerId::Fix);
    const auto p = tokenize(pp.prefix, TokenizerId::Fix);
    if (newline_quirk_ && !p.empty() && p[p.size() - 1].text == "\n") return "}";
    if (p.size() > f.size() || !same_tokens(p, 0, f, 0, p.size())) return echo;

    if (pp.style != PromptStyle::P4) {
        if (p.size() == f.size()) return "";
        return fixed->substr(f[p.size()].span.begin);
    }
    const auto s = tokenize(pp.suffix, TokenizerId::Fix);
    if (p.size() + s.size() > f.size() || !same_tokens(s, 0, f, f.size() - s.size(), s.size())) return echo;
    const std::size_t b = p.size();
    const std::size_t e = f.size() - s.size();
    if (b == e) return "";
    return fixed->substr(f[b].span.begin, f[e - 1].span.end - f[b].span.begin);
}

std::vector<Completion> EchoOracleBackend::complete(const GenerationRequest& request) const {
    return {Completion{oracle_completion(request.prompt_text), std::nullopt}};
}

NoisyLengthBackend::NoisyLengthBackend(const std::vector<BugFixSample>& samples, double epsilon,
                                       std::uint64_t seed, bool newline_quirk)
    : oracle_(samples, newline_quirk), epsilon_(epsilon), seed_(seed) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) fail(ErrorKind::Config, "fixer.epsilon must lie in [0, 1]");
}

std::vector<Completion> NoisyLengthBackend::complete(const GenerationRequest& request) const {
    const std::string clean = oracle_.oracle_completion(request.prompt_text);
    const auto tokens = tokenize(clean, TokenizerId::Fix);
    const std::uint64_t base =
        mix64(seed_) ^ mix64(fnv1a64(request.prompt_text)) ^ mix64(request.seed.value_or(0) + 0x9e37);
    std::vector<Completion> out;
    for (int i = 0; i < request.n; ++i) {
        std::mt19937_64 rng(base ^ mix64(static_cast<std::uint64_t>(i) + 1));
        std::string text;
        std::size_t pos = 0;
        for (std::size_t t = 0; t < tokens.size(); ++t) {
            text.append(clean, pos, tokens[t].span.begin - pos);
            text += uniform01(rng) < epsilon_ ? std::string(kNoiseToken) : tokens[t].text;
            pos = tokens[t].span.end;
        }
        text.append(clean, pos, std::string::npos);
        out.push_back({std::move(text), std::nullopt});
    }
    return out;
}

nlohmann::json HttpCompletionBackend::request_body(const GenerationRequest& r) {
    nlohmann::json body = {{"prompt", r.prompt_text},
                           {"n", r.n},
                           {"max_tokens", r.max_new_tokens},
                           {"temperature", r.temperature},
                           {"stop", r.stop}};
    if (r.seed) body["seed"] = *r.seed;
    return body;
}

std::vector<Completion> HttpCompletionBackend::parse_response(const nlohmann::json& body) {
    if (!body.is_object() || !body.contains("choices") || !body.at("choices").is_array())
        fail(ErrorKind::MalformedResponse, "completion response has no 'choices' array");
    std::vector<Completion> out;
    for (const auto& choice : body.at("choices")) {
        if (!choice.is_object() || !choice.contains("text") || !choice.at("text").is_string())
            fail(ErrorKind::MalformedResponse, "completion choice has no 'text' string");
        Completion c;
        c.text = choice.at("text").get<std::string>();
        if (choice.contains("score") && !choice.at("score").is_null()) {
            if (!choice.at("score").is_number())
                fail(ErrorKind::MalformedResponse, "completion choice 'score' is not a number");
            c.score = choice.at("score").get<double>();
        }
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<Completion> HttpCompletionBackend::complete(const GenerationRequest& request) const {
    return parse_response(post_json(endpoint_, "/v1/complete", request_body(request), retry_));
}

nlohmann::json to_json(const BackendConfig& c) {
    return {{"kind", c.kind},           {"epsilon", c.epsilon},
            {"seed", c.seed},           {"newline_quirk", c.newline_quirk},
            {"table", c.table},         {"endpoint", c.endpoint},
            {"max_attempts", c.retry.max_attempts}, {"timeout_ms", c.retry.timeout_ms}};
}

BackendConfig backend_config_from_json(const nlohmann::json& j) {
    BackendConfig c;
    try {
        if (j.contains("kind")) c.kind = j.at("kind").get<std::string>();
        if (j.contains("epsilon")) c.epsilon = j.at("epsilon").get<double>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("newline_quirk")) c.newline_quirk = j.at("newline_quirk").get<bool>();
        if (j.contains("table")) c.table = j.at("table").get<std::string>();
        if (j.contains("endpoint")) c.endpoint = j.at("endpoint").get<std::string>();
        if (j.contains("max_attempts")) c.retry.max_attempts = j.at("max_attempts").get<int>();
        if (j.contains("timeout_ms")) c.retry.timeout_ms = j.at("timeout_ms").get<int>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("fixer.backend: ") + e.what());
    }
    if (c.kind != "echo_oracle" && c.kind != "noisy_length" && c.kind != "mock_table" && c.kind != "http")
        fail(ErrorKind::Config, "fixer.backend.kind: unknown backend '" + c.kind + "'");
    return c;
}

std::unique_ptr<CompletionBackend> make_backend(const BackendConfig& c,
                                                const std::vector<BugFixSample>& samples) {
    if (c.kind == "echo_oracle") return std::make_unique<EchoOracleBackend>(samples, c.newline_quirk);
    if (c.kind == "noisy_length")
        return std::make_unique<NoisyLengthBackend>(samples, c.epsilon, c.seed, c.newline_quirk);
    if (c.kind == "mock_table") {
        if (c.table.empty()) fail(ErrorKind::Config, "fixer.backend.table is required for mock_table");
        return std::make_unique<MockTableBackend>(MockTableBackend::load(c.table));
    }
    if (c.endpoint.empty()) fail(ErrorKind::Config, "fixer.backend.endpoint is required for http");
    return std::make_unique<HttpCompletionBackend>(c.endpoint, c.retry);
}

}  // namespace tokfix
