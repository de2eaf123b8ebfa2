#pragma once

#include "tokfix/corpus.hpp"
#include "tokfix/region.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tokfix {

enum class MutationKind {
    IdentRename,
    OperatorSwap,
    CallRename,
    StatementDelete,
    StatementInsert,
    LiteralChange,
};

const char* to_string(MutationKind kind) noexcept;
MutationKind mutation_kind_from_string(const std::string& s);

/// Seeded description of a synthetic corpus. Each sample is a Java-flavoured
/// template function (`fixed`) and a copy with exactly one mutation (`buggy`).
struct MutationSpec {
    /// Relative weights of the mutation kinds; kinds with weight 0 are unused.
    std::map<MutationKind, double> kinds{
        {MutationKind::IdentRename, 0.2},     {MutationKind::OperatorSwap, 0.2},
        {MutationKind::CallRename, 0.2},      {MutationKind::LiteralChange, 0.2},
        {MutationKind::StatementDelete, 0.15}, {MutationKind::StatementInsert, 0.05},
    };
    std::uint64_t seed = 1;
    int functions_per_corpus = 1000;
    int min_lines = 4;
    int max_lines = 9;
    /// Nouns used to build camelCase identifiers.
    std::vector<std::string> identifiers{"value", "count", "total", "index", "limit", "offset",
                                         "buffer", "result", "item", "node", "size", "state",
                                         "width", "height", "score", "length"};
    /// Fraction of samples that carry a "change X to Y on line K" comment.
    double comment_fraction = 0.3;
    /// Fraction of call renames where the fix appends a hump (the buggy name
    /// is a strict prefix of the fixed one). The rest drop one.
    double call_insert_fraction = 0.0;
    std::string id_prefix = "syn";

    /// Preset for the tokenizer-discrepancy experiments: mostly call renames,
    /// half of which append a hump in the fix.
    static MutationSpec camel_case_discrepancy(std::uint64_t seed, int functions);
};

nlohmann::json to_json(const MutationSpec& spec);
MutationSpec mutation_spec_from_json(const nlohmann::json& j);

/// Generator-side record of where the edit is, per tokenizer, as a byte span
/// of the buggy source. An empty span marks an insertion point.
struct SyntheticTruth {
    MutationKind kind = MutationKind::IdentRename;
    CharSpan loc_span;
    CharSpan fix_span;
};

/// Reads the truth back from a sample's `meta` field.
std::optional<SyntheticTruth> synthetic_truth(const BugFixSample& sample);

/// Region implied by a generator span: the tokens overlapping it, or the
/// first token at/after the insertion point for an empty span.
BugRegion region_from_span(const TokenizedFunction& buggy, const CharSpan& span);

std::vector<BugFixSample> generate_corpus(const MutationSpec& spec);

}  // namespace tokfix
