#pragma once

#include "tokfix/tokenizer.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace tokfix {

/// Token interval [start, end] of buggy tokens. An empty region (pure
/// insertion) has end == start - 1: the insertion point is before `start`.
struct BugRegion {
    std::ptrdiff_t start = 0;
    std::ptrdiff_t end = -1;
    TokenizerId tokenizer = TokenizerId::Fix;

    bool empty() const noexcept { return end == start - 1; }
    bool operator==(const BugRegion&) const = default;
};

/// Splits a buggy function into shared prefix / buggy middle / shared suffix
/// around a region. When built by extract_region it also carries the fixed
/// function and the slice of fixed tokens that replaces the buggy middle.
class RegionDecomposition {
public:
    RegionDecomposition() = default;

    const TokenizedFunction& buggy() const noexcept { return buggy_; }
    const std::optional<TokenizedFunction>& fixed() const noexcept { return fixed_; }
    const BugRegion& region() const noexcept { return region_; }

    std::size_t prefix_tokens() const noexcept { return static_cast<std::size_t>(region_.start); }
    std::size_t suffix_tokens() const noexcept {
        return buggy_.size() - static_cast<std::size_t>(region_.end + 1);
    }
    std::size_t middle_tokens() const noexcept {
        return static_cast<std::size_t>(region_.end + 1 - region_.start);
    }

    /// Maximal common prefix / suffix lengths before any widening (only
    /// meaningful for decompositions produced by extract_region).
    std::size_t raw_prefix() const noexcept { return raw_prefix_; }
    std::size_t raw_suffix() const noexcept { return raw_suffix_; }
    /// The edit was a pure insertion (buggy middle empty before widening).
    bool insertion() const noexcept { return insertion_; }
    bool widened() const noexcept { return widened_; }

    /// Byte offsets in the buggy source where the region starts / ends.
    std::size_t cut_begin() const noexcept;
    std::size_t cut_end() const noexcept;

    std::string prefix_text() const;
    std::string middle_text() const;
    std::string suffix_text() const;
    /// Buggy source from the region start to the end of the function.
    std::string truncated_buggy_text() const;

    /// Fixed-side slices; require fixed().has_value().
    std::size_t fixed_middle_begin() const noexcept { return fixed_begin_; }
    std::size_t fixed_middle_end() const noexcept { return fixed_end_; }
    std::string fixed_middle_text() const;
    /// Fixed source from the first replacement token to the end.
    std::string truncated_fixed_text() const;

    std::vector<std::string> prefix_token_texts() const;
    std::vector<std::string> middle_token_texts() const;
    std::vector<std::string> suffix_token_texts() const;
    std::vector<std::string> fixed_middle_token_texts() const;

private:
    friend RegionDecomposition extract_region(const TokenizedFunction&, const TokenizedFunction&,
                                              bool);
    friend RegionDecomposition decompose_at(const TokenizedFunction&, const BugRegion&);

    TokenizedFunction buggy_;
    std::optional<TokenizedFunction> fixed_;
    BugRegion region_;
    std::size_t raw_prefix_ = 0;
    std::size_t raw_suffix_ = 0;
    bool insertion_ = false;
    bool widened_ = false;
    std::size_t fixed_begin_ = 0;
    std::size_t fixed_end_ = 0;
};

/// Ground-truth region from the maximal shared token prefix and suffix.
/// The prefix is maximized first, then the suffix under p + s <= min(|b|, |f|).
/// With `expand_empty`, a pure insertion is widened to the one-token region
/// [p, p] (or [p-1, p-1] when the insertion is at the very end) so there is
/// always a buggy token to point at. Throws degenerate-pair when the token
/// sequences are identical, tokenizer-mismatch when the views differ.
RegionDecomposition extract_region(const TokenizedFunction& buggy, const TokenizedFunction& fixed,
                                   bool expand_empty = true);

/// Decomposition at an arbitrary (e.g. predicted) region; no fixed side.
RegionDecomposition decompose_at(const TokenizedFunction& buggy, const BugRegion& region);

/// Maps a region on one view of a source onto another view of the same
/// source: the start through the token holding its first byte, the end
/// through the token holding its last byte. Empty regions stay empty.
BugRegion translate_region(const TokenizedFunction& src, const TokenizedFunction& dst,
                           const BugRegion& region);

/// prefix text + generated middle + suffix text. Affix spacing is taken from
/// the buggy source; a single space is inserted where two word characters
/// would otherwise fuse across a cut that sat on a word boundary.
std::string reconstruct_fix(const RegionDecomposition& decomp, const std::string& generated_middle);

/// Joins two code fragments at a cut. `boundary_cut` says whether the cut in
/// the original text separated two distinct words.
std::string join_at_cut(const std::string& left, const std::string& right, bool boundary_cut);

/// Oracle dump record: id, tokenizer, start, end, empty, p, s, insertion.
nlohmann::json oracle_record(const std::string& id, const RegionDecomposition& decomp);

}  // namespace tokfix
