#include "tokfix/region.hpp"

#include "tokfix/error.hpp"

#include <algorithm>

namespace tokfix {

namespace {

std::vector<std::string> slice_texts(const TokenizedFunction& tf, std::size_t b, std::size_t e) {
    std::vector<std::string> out;
    for (std::size_t i = b; i < e; ++i) out.push_back(tf[i].text);
    return out;
}

bool splits_word(const std::string& src, std::size_t cut) {
    return cut > 0 && cut < src.size() && is_word_byte(static_cast<unsigned char>(src[cut - 1])) &&
           is_word_byte(static_cast<unsigned char>(src[cut]));
}

}  // namespace

std::size_t RegionDecomposition::cut_begin() const noexcept {
    const auto start = static_cast<std::size_t>(region_.start);
    return start < buggy_.size() ? buggy_[start].span.begin : buggy_.source().size();
}

std::size_t RegionDecomposition::cut_end() const noexcept {
    if (region_.empty()) return cut_begin();
    return buggy_[static_cast<std::size_t>(region_.end)].span.end;
}

std::string RegionDecomposition::prefix_text() const {
    return buggy_.source().substr(0, cut_begin());
}

std::string RegionDecomposition::middle_text() const {
    return buggy_.source().substr(cut_begin(), cut_end() - cut_begin());
}

std::string RegionDecomposition::suffix_text() const { return buggy_.source().substr(cut_end()); }

std::string RegionDecomposition::truncated_buggy_text() const {
    return buggy_.source().substr(cut_begin());
}

std::string RegionDecomposition::fixed_middle_text() const {
    if (!fixed_) fail(ErrorKind::Precondition, "decomposition has no fixed function");
    if (fixed_begin_ >= fixed_end_) return {};
    const auto& f = *fixed_;
    return f.source().substr(f[fixed_begin_].span.begin,
                             f[fixed_end_ - 1].span.end - f[fixed_begin_].span.begin);
}

std::string RegionDecomposition::truncated_fixed_text() const {
    if (!fixed_) fail(ErrorKind::Precondition, "decomposition has no fixed function");
    const auto& f = *fixed_;
    if (fixed_begin_ >= f.size()) return {};
    return f.source().substr(f[fixed_begin_].span.begin);
}

std::vector<std::string> RegionDecomposition::prefix_token_texts() const {
    return slice_texts(buggy_, 0, prefix_tokens());
}

std::vector<std::string> RegionDecomposition::middle_token_texts() const {
    return slice_texts(buggy_, prefix_tokens(), prefix_tokens() + middle_tokens());
}

std::vector<std::string> RegionDecomposition::suffix_token_texts() const {
    return slice_texts(buggy_, buggy_.size() - suffix_tokens(), buggy_.size());
}

std::vector<std::string> RegionDecomposition::fixed_middle_token_texts() const {
    if (!fixed_) fail(ErrorKind::Precondition, "decomposition has no fixed function");
    return slice_texts(*fixed_, fixed_begin_, fixed_end_);
}

RegionDecomposition extract_region(const TokenizedFunction& buggy, const TokenizedFunction& fixed,
                                   bool expand_empty) {
    if (buggy.tokenizer() != fixed.tokenizer())
        fail(ErrorKind::TokenizerMismatch, "buggy and fixed were tokenized differently");

    const std::size_t nb = buggy.size();
    const std::size_t nf = fixed.size();
    const std::size_t limit = std::min(nb, nf);

    std::size_t p = 0;
    while (p < limit && buggy[p].text == fixed[p].text) ++p;
    if (p == nb && p == nf) fail(ErrorKind::DegeneratePair, "buggy and fixed token sequences are identical");

    std::size_t s = 0;
    while (p + s < limit && buggy[nb - 1 - s].text == fixed[nf - 1 - s].text) ++s;

    RegionDecomposition d;
    d.buggy_ = buggy;
    d.fixed_ = fixed;
    d.raw_prefix_ = p;
    d.raw_suffix_ = s;
    d.region_.tokenizer = buggy.tokenizer();
    d.region_.start = static_cast<std::ptrdiff_t>(p);
    d.region_.end = static_cast<std::ptrdiff_t>(nb - s) - 1;
    d.fixed_begin_ = p;
    d.fixed_end_ = nf - s;
    d.insertion_ = d.region_.empty();

    if (d.insertion_ && expand_empty && nb > 0) {
        if (p < nb) {
            // Anchor on the first suffix token.
            d.region_.end = d.region_.start;
            d.fixed_end_ = nf - (s - 1);
        } else {
            // Insertion after the last buggy token: anchor on that token.
            d.region_.start = static_cast<std::ptrdiff_t>(p) - 1;
            d.region_.end = d.region_.start;
            d.fixed_begin_ = p - 1;
        }
        d.widened_ = true;
    }
    return d;
}

RegionDecomposition decompose_at(const TokenizedFunction& buggy, const BugRegion& region) {
    if (region.tokenizer != buggy.tokenizer())
        fail(ErrorKind::TokenizerMismatch, "region indices refer to another tokenizer");
    const auto n = static_cast<std::ptrdiff_t>(buggy.size());
    if (region.start < 0 || region.start > n || region.end < region.start - 1 || region.end >= n)
        fail(ErrorKind::InvalidArgument,
             "region [" + std::to_string(region.start) + ", " + std::to_string(region.end) +
                 "] invalid for " + std::to_string(n) + " tokens");
    RegionDecomposition d;
    d.buggy_ = buggy;
    d.region_ = region;
    d.raw_prefix_ = static_cast<std::size_t>(region.start);
    d.raw_suffix_ = static_cast<std::size_t>(n - region.end - 1);
    d.insertion_ = region.empty();
    return d;
}

std::string join_at_cut(const std::string& left, const std::string& right, bool boundary_cut) {
    if (boundary_cut && !left.empty() && !right.empty() &&
        is_word_byte(static_cast<unsigned char>(left.back())) &&
        is_word_byte(static_cast<unsigned char>(right.front()))) {
        return left + " " + right;
    }
    return left + right;
}

std::string reconstruct_fix(const RegionDecomposition& decomp, const std::string& generated_middle) {
    const auto& src = decomp.buggy().source();
    const bool left_boundary = !splits_word(src, decomp.cut_begin());
    const bool right_boundary = !splits_word(src, decomp.cut_end());
    const std::string prefix = decomp.prefix_text();
    const std::string suffix = decomp.suffix_text();
    if (generated_middle.empty()) return join_at_cut(prefix, suffix, left_boundary && right_boundary);
    return join_at_cut(join_at_cut(prefix, generated_middle, left_boundary), suffix, right_boundary);
}

BugRegion translate_region(const TokenizedFunction& src, const TokenizedFunction& dst,
                           const BugRegion& region) {
    if (region.tokenizer != src.tokenizer())
        fail(ErrorKind::TokenizerMismatch, "region indices do not belong to the source view");
    if (region.start < 0 || static_cast<std::size_t>(region.start) >= src.size())
        fail(ErrorKind::InvalidArgument, "region start out of range");
    BugRegion out;
    out.tokenizer = dst.tokenizer();
    out.start = static_cast<std::ptrdiff_t>(
        translate_location(src, dst, static_cast<std::size_t>(region.start), Side::Start));
    if (region.empty()) {
        out.end = out.start - 1;
    } else {
        out.end = static_cast<std::ptrdiff_t>(
            translate_location(src, dst, static_cast<std::size_t>(region.end), Side::End));
        out.end = std::max(out.end, out.start);
    }
    return out;
}

nlohmann::json oracle_record(const std::string& id, const RegionDecomposition& d) {
    nlohmann::json j;
    j["id"] = id;
    j["tokenizer"] = to_string(d.region().tokenizer);
    j["start"] = d.region().start;
    j["end"] = d.region().end;
    j["empty"] = d.region().empty();
    j["p"] = d.raw_prefix();
    j["s"] = d.raw_suffix();
    j["insertion"] = d.insertion();
    return j;
}

}  // namespace tokfix
