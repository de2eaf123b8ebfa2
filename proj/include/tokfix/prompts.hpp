#pragma once

#include "tokfix/region.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tokfix {

/// Prompt layouts:
///   P1  buggy function                          -> whole fixed function
///   P2  buggy function SEP prefix                -> fixed text after the prefix
///   P3  buggy text from region start SEP prefix  -> fixed text after the prefix
///   P4  buggy middle SEP prefix SEP suffix       -> replacement middle only
enum class PromptStyle { P1, P2, P3, P4 };

const char* to_string(PromptStyle style) noexcept;
PromptStyle prompt_style_from_string(std::string_view name);

inline constexpr std::string_view kSepMarker = "\n<sep>\n";
inline constexpr std::string_view kCommentMarker = "\n<comment>\n";
inline constexpr std::string_view kEndOfText = "<|endoftext|>";

struct RepairPrompt {
    PromptStyle style = PromptStyle::P3;
    std::string text;
    std::vector<std::string> stop_markers;
    RegionDecomposition reconstruction;
    /// Oracle completion; present when the decomposition carries the fixed side.
    std::optional<std::string> expected_target;
};

/// Builds the prompt for `style`. The buggy view must be the one `decomp`
/// was built from (region-mismatch otherwise). A comment, when given, is
/// appended after the comment marker.
RepairPrompt build_prompt(PromptStyle style, const TokenizedFunction& buggy,
                          const RegionDecomposition& decomp,
                          const std::optional<std::string>& comment = std::nullopt,
                          std::string_view end_of_text = kEndOfText);

/// Cuts `completion` at the earliest stop marker.
std::string truncate_at_stop(std::string_view completion, const std::vector<std::string>& stops);

/// Turns a raw completion into a full candidate function.
std::string completion_to_fix(const RepairPrompt& prompt, const std::string& completion);

/// Prompt dump record: id, style, text, expected_target.
nlohmann::json prompt_record(const std::string& id, const RepairPrompt& prompt);

/// Inverse of the prompt layouts, used by oracle backends: recovers the cut
/// fragments from prompt text.
struct ParsedPrompt {
    PromptStyle style = PromptStyle::P1;
    std::string first;   // P1/P2: buggy function; P3: truncated buggy; P4: middle
    std::string prefix;  // P2-P4
    std::string suffix;  // P4
    std::optional<std::string> comment;
};

/// Splits on the markers. P2 and P3 share a layout: two-part prompts are
/// reported as P3 and callers tell them apart by whether `first` is a whole
/// function.
ParsedPrompt parse_prompt(std::string_view text);

}  // namespace tokfix
