#pragma once

#include "tokfix/corpus.hpp"
#include "tokfix/http.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace tokfix {

struct GenerationRequest {
    std::string prompt_text;
    int n = 1;
    int max_new_tokens = 256;
    double temperature = 0.8;
    std::vector<std::string> stop;
    std::optional<std::uint64_t> seed;
};

struct Completion {
    std::string text;
    std::optional<double> score;

    bool operator==(const Completion&) const = default;
};

/// One ranked candidate fix for a sample.
struct CandidatePatch {
    std::string sample_id;
    int rank = 1;  // 1-based, no gaps within a sample
    std::string fixed_function;
    std::string raw_completion;
    std::optional<double> score;
    std::string backend_id;

    bool operator==(const CandidatePatch&) const = default;
};

nlohmann::json to_json(const CandidatePatch& c);
CandidatePatch candidate_from_json(const nlohmann::json& j);

/// A source of completions. Implementations must tolerate concurrent calls.
class CompletionBackend {
public:
    virtual ~CompletionBackend() = default;
    virtual std::string id() const = 0;
    virtual std::vector<Completion> complete(const GenerationRequest& request) const = 0;
};

/// Validates the request, calls the backend and cuts every completion at its
/// first stop marker. Returns at most `n` completions.
std::vector<Completion> generate(const CompletionBackend& backend, const GenerationRequest& request);

/// Fixed prompt -> completions table; unknown prompts yield nothing.
class MockTableBackend : public CompletionBackend {
public:
    explicit MockTableBackend(std::map<std::string, std::vector<Completion>> table)
        : table_(std::move(table)) {}

    /// Accepts [{"prompt": ..., "completions": [{"text": ..., "score": ...}, ...]}, ...].
    static MockTableBackend from_json(const nlohmann::json& j);
    static MockTableBackend load(const std::string& path);

    std::string id() const override { return "mock_table"; }
    std::vector<Completion> complete(const GenerationRequest& request) const override;

private:
    std::map<std::string, std::vector<Completion>> table_;
};

/// Ground-truth completion for a prompt, found by recovering the buggy
/// function from the prompt layout and looking up its fix. Works at FIX-token
/// granularity: the completion is exact whenever the prompt's prefix (and, for
/// the infill layout, its suffix) are token-level affixes of the fixed
/// function, which covers widened and over-long regions. Otherwise it echoes
/// the buggy fragment back.
class EchoOracleBackend : public CompletionBackend {
public:
    /// With `newline_quirk`, prompts whose prefix ends in a newline token are
    /// answered with a premature closing brace.
    explicit EchoOracleBackend(const std::vector<BugFixSample>& samples, bool newline_quirk = false);

    std::string id() const override { return "echo_oracle"; }
    std::vector<Completion> complete(const GenerationRequest& request) const override;

    /// The single completion this backend returns for `prompt_text`.
    std::string oracle_completion(const std::string& prompt_text) const;

private:
    std::unordered_map<std::string, std::string> fixes_;
    bool newline_quirk_;
};

/// Oracle completion with every FIX token independently replaced by a noise
/// token with probability epsilon. A target of L tokens survives intact with
/// probability (1 - epsilon)^L.
class NoisyLengthBackend : public CompletionBackend {
public:
    NoisyLengthBackend(const std::vector<BugFixSample>& samples, double epsilon, std::uint64_t seed,
                       bool newline_quirk = false);

    std::string id() const override { return "noisy_length"; }
    std::vector<Completion> complete(const GenerationRequest& request) const override;

    static constexpr const char* kNoiseToken = "__noise__";

private:
    EchoOracleBackend oracle_;
    double epsilon_;
    std::uint64_t seed_;
};

/// POST {endpoint}/v1/complete
///   {prompt, n, max_tokens, temperature, stop, seed?} -> {choices: [{text, score?}]}
class HttpCompletionBackend : public CompletionBackend {
public:
    HttpCompletionBackend(std::string endpoint, RetryPolicy retry)
        : endpoint_(std::move(endpoint)), retry_(retry) {}

    std::string id() const override { return "http"; }
    std::vector<Completion> complete(const GenerationRequest& request) const override;

    static nlohmann::json request_body(const GenerationRequest& request);
    static std::vector<Completion> parse_response(const nlohmann::json& body);

private:
    std::string endpoint_;
    RetryPolicy retry_;
};

struct BackendConfig {
    std::string kind = "echo_oracle";  // echo_oracle | noisy_length | mock_table | http
    double epsilon = 0.02;
    std::uint64_t seed = 1;
    bool newline_quirk = false;
    std::string table;     // mock_table: path of the table file
    std::string endpoint;  // http
    RetryPolicy retry;
};

nlohmann::json to_json(const BackendConfig& c);
BackendConfig backend_config_from_json(const nlohmann::json& j);

/// Oracle backends take their ground truth from `samples`.
std::unique_ptr<CompletionBackend> make_backend(const BackendConfig& config,
                                                const std::vector<BugFixSample>& samples);

}  // namespace tokfix
