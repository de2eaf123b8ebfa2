#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tokfix {

/// One buggy/fixed function pair.
struct BugFixSample {
    std::string id;
    std::string buggy;
    std::string fixed;
    std::optional<std::string> comment;
    std::optional<std::vector<int>> buggy_lines;  // 1-based
    std::optional<std::string> language_tag;
    /// Opaque generator metadata (synthetic corpora only). Passed through.
    std::optional<nlohmann::json> meta;

    /// Whitespace-only or empty edits; accepted at load time, flagged.
    bool unchanged() const { return buggy == fixed; }

    bool operator==(const BugFixSample&) const = default;
};

std::size_t line_count(const std::string& text);

nlohmann::json to_json(const BugFixSample& sample);

/// Parses one record. `where` prefixes error messages (e.g. "corpus.jsonl:3").
BugFixSample sample_from_json(const nlohmann::json& record, const std::string& where);

/// Reads a line-delimited record file. Blank lines are skipped. Throws
/// io-error or schema-error naming the offending line.
std::vector<BugFixSample> load_corpus(const std::string& path);

/// Same as load_corpus but from an in-memory buffer.
std::vector<BugFixSample> parse_corpus(const std::string& text, const std::string& origin);

std::string serialize_corpus(const std::vector<BugFixSample>& samples);
void write_corpus(const std::string& path, const std::vector<BugFixSample>& samples);

struct CorpusSplit {
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> test;
    std::uint64_t seed = 0;
    std::array<double, 3> ratios{0.8, 0.1, 0.1};
};

/// Seeded Fisher-Yates shuffle of the ids followed by a contiguous cut:
/// train gets floor(n*r1), validation floor(n*r2), test the remainder.
CorpusSplit split_corpus(const std::vector<BugFixSample>& samples,
                         const std::array<double, 3>& ratios, std::uint64_t seed);

nlohmann::json to_json(const CorpusSplit& split);
CorpusSplit split_from_json(const nlohmann::json& j);
void write_split(const std::string& path, const CorpusSplit& split);
CorpusSplit load_split(const std::string& path);

/// Picks the samples named by `ids` in that order. Unknown ids are a
/// schema-error.
std::vector<BugFixSample> select(const std::vector<BugFixSample>& samples,
                                 const std::vector<std::string>& ids);

}  // namespace tokfix
