#include "tokfix/prompts.hpp"

#include "tokfix/error.hpp"

namespace tokfix {

const char* to_string(PromptStyle style) noexcept {
    switch (style) {
        case PromptStyle::P1: return "P1";
        case PromptStyle::P2: return "P2";
        case PromptStyle::P3: return "P3";
        case PromptStyle::P4: return "P4";
    }
    return "P?";
}

PromptStyle prompt_style_from_string(std::string_view name) {
    if (name == "P1" || name == "1") return PromptStyle::P1;
    if (name == "P2" || name == "2") return PromptStyle::P2;
    if (name == "P3" || name == "3") return PromptStyle::P3;
    if (name == "P4" || name == "4") return PromptStyle::P4;
    fail(ErrorKind::InvalidArgument, "unknown prompt style '" + std::string(name) + "'");
}

RepairPrompt build_prompt(PromptStyle style, const TokenizedFunction& buggy,
                          const RegionDecomposition& decomp,
                          const std::optional<std::string>& comment,
                          std::string_view end_of_text) {
    if (style != PromptStyle::P1 &&
        (decomp.buggy().source() != buggy.source() || decomp.buggy().tokenizer() != buggy.tokenizer()))
        fail(ErrorKind::RegionMismatch, "decomposition was not built from this buggy function");

    RepairPrompt prompt;
    prompt.style = style;
    prompt.reconstruction = decomp;
    prompt.stop_markers = {std::string(kSepMarker)};
    if (!end_of_text.empty()) prompt.stop_markers.emplace_back(end_of_text);

    const std::string sep(kSepMarker);
    switch (style) {
        case PromptStyle::P1:
            prompt.text = buggy.source();
            break;
        case PromptStyle::P2:
            prompt.text = buggy.source() + sep + decomp.prefix_text();
            break;
        case PromptStyle::P3:
            prompt.text = decomp.truncated_buggy_text() + sep + decomp.prefix_text();
            break;
        case PromptStyle::P4:
            prompt.text = decomp.middle_text() + sep + decomp.prefix_text() + sep + decomp.suffix_text();
            break;
    }
    if (comment) prompt.text += std::string(kCommentMarker) + *comment;

    if (decomp.fixed()) {
        switch (style) {
            case PromptStyle::P1: prompt.expected_target = decomp.fixed()->source(); break;
            case PromptStyle::P2:
            case PromptStyle::P3: prompt.expected_target = decomp.truncated_fixed_text(); break;
            case PromptStyle::P4: prompt.expected_target = decomp.fixed_middle_text(); break;
        }
    }
    return prompt;
}

std::string truncate_at_stop(std::string_view completion, const std::vector<std::string>& stops) {
    std::size_t cut = completion.size();
    for (const auto& stop : stops) {
        if (stop.empty()) continue;
        const auto pos = completion.find(stop);
        if (pos != std::string_view::npos) cut = std::min(cut, pos);
    }
    return std::string(completion.substr(0, cut));
}

std::string completion_to_fix(const RepairPrompt& prompt, const std::string& completion) {
    const std::string body = truncate_at_stop(completion, prompt.stop_markers);
    const auto& d = prompt.reconstruction;
    switch (prompt.style) {
        case PromptStyle::P1:
            return body;
        case PromptStyle::P2:
        case PromptStyle::P3: {
            const auto& src = d.buggy().source();
            const std::size_t cut = d.cut_begin();
            const bool splits = cut > 0 && cut < src.size() &&
                                is_word_byte(static_cast<unsigned char>(src[cut - 1])) &&
                                is_word_byte(static_cast<unsigned char>(src[cut]));
            return join_at_cut(d.prefix_text(), body, !splits);
        }
        case PromptStyle::P4:
            return reconstruct_fix(d, body);
    }
    return body;
}

nlohmann::json prompt_record(const std::string& id, const RepairPrompt& prompt) {
    nlohmann::json j;
    j["id"] = id;
    j["style"] = to_string(prompt.style);
    j["text"] = prompt.text;
    j["expected_target"] =
        prompt.expected_target ? nlohmann::json(*prompt.expected_target) : nlohmann::json(nullptr);
    return j;
}

ParsedPrompt parse_prompt(std::string_view text) {
    ParsedPrompt out;
    if (const auto c = text.find(kCommentMarker); c != std::string_view::npos) {
        out.comment = std::string(text.substr(c + kCommentMarker.size()));
        text = text.substr(0, c);
    }
    std::vector<std::string> parts;
    std::size_t from = 0;
    while (true) {
        const auto pos = text.find(kSepMarker, from);
        if (pos == std::string_view::npos) {
            parts.emplace_back(text.substr(from));
            break;
        }
        parts.emplace_back(text.substr(from, pos - from));
        from = pos + kSepMarker.size();
    }
    switch (parts.size()) {
        case 1:
            out.style = PromptStyle::P1;
            out.first = parts[0];
            break;
        case 2:
            out.style = PromptStyle::P3;
            out.first = parts[0];
            out.prefix = parts[1];
            break;
        case 3:
            out.style = PromptStyle::P4;
            out.first = parts[0];
            out.prefix = parts[1];
            out.suffix = parts[2];
            break;
        default:
            fail(ErrorKind::MalformedResponse,
                 "prompt has " + std::to_string(parts.size()) + " separator-delimited parts");
    }
    return out;
}

}  // namespace tokfix
