#pragma once

#include "tokfix/backend.hpp"
#include "tokfix/region.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tokfix {

/// FIX-token texts joined with a unit separator: whitespace between tokens is
/// ignored, newline tokens are kept.
std::string normalized_key(const std::string& code);

/// Token-sequence equality by default; byte equality with `raw`.
bool exact_match(const std::string& candidate, const std::string& ground_truth, bool raw = false);

struct LocalizationAccuracy {
    double start = 0.0;
    double end = 0.0;
    double both = 0.0;
    double partial = 0.0;  // predicted region covers the truth
    std::size_t n = 0;
};

/// Pairs are (predicted, truth) in the same tokenizer's indices
/// (tokenizer-mismatch otherwise). Empty input gives nullopt.
std::optional<LocalizationAccuracy> localization_accuracies(
    const std::vector<std::pair<BugRegion, BugRegion>>& predictions);

/// K -> number of bugs with an exact match among their first K candidates.
std::map<int, int> topk_curve(const std::vector<std::vector<CandidatePatch>>& candidates,
                              const std::vector<std::string>& truths, const std::vector<int>& ks,
                              bool raw = false);

/// Everything the report needs about one sample.
struct SampleOutcome {
    std::string id;
    std::string fixed;  // ground truth
    std::vector<CandidatePatch> candidates;
    std::optional<BugRegion> predicted;  // localizer output (LOC)
    std::optional<BugRegion> truth;      // ground truth (LOC)
    std::optional<std::string> error;
};

struct SampleVerdict {
    std::string id;
    bool exact_match = false;  // rank-1 candidate
    std::optional<int> first_correct_rank;
    std::size_t candidates = 0;
    std::optional<BugRegion> predicted;
    std::optional<BugRegion> truth;
    std::optional<std::string> error;
};

struct EvalReport {
    std::string corpus_id;
    std::size_t n_samples = 0;
    std::optional<double> em_accuracy;
    std::optional<LocalizationAccuracy> localization;
    std::map<int, int> topk;
    std::vector<SampleVerdict> per_sample;
    std::string config_fingerprint;
};

/// Stable hash of a configuration record.
std::string config_fingerprint(const nlohmann::json& config);

EvalReport evaluate(const std::string& corpus_id, const std::vector<SampleOutcome>& outcomes,
                    const std::vector<int>& ks, const nlohmann::json& config, bool raw = false);

/// Violated metric relations (both <= start, end; partial >= both; Top-K
/// monotone). Empty when all hold.
std::vector<std::string> check_invariants(const EvalReport& report);

nlohmann::json to_json(const EvalReport& report);
/// Machine format: JSON with sorted keys.
std::string render_machine(const EvalReport& report);
/// Human format: one row per corpus, one column per metric.
std::string render_table(const EvalReport& report);
/// Reads the metric cells back from render_table output.
std::map<std::string, std::optional<double>> parse_table(const std::string& table);

}  // namespace tokfix
