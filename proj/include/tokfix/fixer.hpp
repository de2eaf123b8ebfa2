#pragma once

#include "tokfix/adjuster.hpp"
#include "tokfix/backend.hpp"
#include "tokfix/corpus.hpp"
#include "tokfix/localizer.hpp"
#include "tokfix/prompts.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tokfix {

struct FixerConfig {
    PromptStyle style = PromptStyle::P3;
    /// Completions requested per sample.
    int budget = 70;
    int max_new_tokens = 256;
    double temperature = 0.8;
    std::uint64_t seed = 1;
    /// Append the sample's comment to the prompt.
    bool prompt_comment = false;
    /// Localizer context switches.
    bool use_line_mask = false;
    bool use_comment = false;
    /// Use ground-truth regions instead of the localizer.
    bool use_oracle_regions = false;
    int max_in_flight = 4;
};

nlohmann::json to_json(const FixerConfig& c);
FixerConfig fixer_config_from_json(const nlohmann::json& j);

struct SampleFix {
    std::string sample_id;
    std::vector<CandidatePatch> candidates;
    std::optional<BugRegion> predicted_loc;  // localizer output (LOC)
    std::optional<BugRegion> truth_loc;      // ground truth (LOC)
    std::optional<BugRegion> prompt_region;  // region the prompt was cut at (FIX)
    std::optional<std::string> error;
};

/// Orders by descending score when every completion has one, otherwise keeps
/// generation order; drops duplicates (same FIX token sequence) keeping the
/// best-ranked copy, then numbers ranks 1..k.
std::vector<CandidatePatch> rank_candidates(std::vector<CandidatePatch> candidates);

/// Interleaves several ranked lists by rank (all rank-1 candidates first, in
/// list order), drops duplicates and renumbers.
std::vector<CandidatePatch> merge_candidates(const std::vector<std::vector<CandidatePatch>>& lists);

/// localize (LOC) -> translate to FIX -> optional adjust -> cut -> prompt ->
/// generate -> reconstruct -> rank. Errors are caught and reported in
/// `error` with an empty candidate list.
SampleFix fix_sample(const BugFixSample& sample, const Localizer* localizer, const Adjuster* adjuster,
                     const CompletionBackend& backend, const FixerConfig& config);

/// fix_sample over a corpus, at most max_in_flight samples at a time. Output
/// order follows `samples`.
std::vector<SampleFix> fix_all(const std::vector<BugFixSample>& samples, const Localizer* localizer,
                               const Adjuster* adjuster, const CompletionBackend& backend,
                               const FixerConfig& config);

/// Per-sample record without the candidates: id, regions, error.
nlohmann::json to_json(const SampleFix& s);
SampleFix sample_fix_from_json(const nlohmann::json& j);
void write_fixes(const std::string& path, const std::vector<SampleFix>& fixes);
/// One record per CandidatePatch, samples in order.
void write_candidates(const std::string& path, const std::vector<SampleFix>& fixes);
/// Reads both files back and reattaches candidates to their samples.
std::vector<SampleFix> load_fixes(const std::string& fixes_path, const std::string& candidates_path);

}  // namespace tokfix
