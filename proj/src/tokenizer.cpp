#include "tokfix/tokenizer.hpp"

#include "tokfix/error.hpp"
#include "tokfix/util.hpp"

#include <algorithm>
#include <array>
#include <cstdio>

namespace tokfix {

const char* to_string(TokenizerId id) noexcept {
    return id == TokenizerId::Loc ? "LOC" : "FIX";
}

TokenizerId tokenizer_from_string(std::string_view name) {
    if (name == "LOC" || name == "loc") return TokenizerId::Loc;
    if (name == "FIX" || name == "fix") return TokenizerId::Fix;
    fail(ErrorKind::InvalidArgument, "unknown tokenizer '" + std::string(name) + "'");
}

bool is_word_byte(unsigned char c) noexcept {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '_' || c == '$' || c >= 0x80;
}

namespace {

bool is_upper(unsigned char c) { return c >= 'A' && c <= 'Z'; }
bool is_lower(unsigned char c) { return c >= 'a' && c <= 'z'; }
bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool is_blank(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v';
}

// Longest match first. "()" is kept whole so an empty argument list is one
// token, as most code BPE vocabularies do.
constexpr std::array<std::string_view, 26> kOperators = {
    ">>>=", "<<=", ">>=", ">>>", "...", "==", "!=", "<=", ">=", "&&", "||", "++", "--",
    "+=",   "-=",  "*=",  "/=",  "%=",  "&=", "|=", "^=", "->", "::", "<<", ">>", "()",
};

std::size_t operator_length(std::string_view rest) {
    for (auto op : kOperators) {
        if (rest.substr(0, op.size()) == op) return op.size();
    }
    return 1;
}

void push(std::vector<Token>& out, const std::string& src, std::size_t b, std::size_t e) {
    out.push_back(Token{src.substr(b, e - b), CharSpan{b, e}});
}

// Splits an underscore-free identifier segment at camelCase humps.
void split_humps(std::vector<Token>& out, const std::string& src, std::size_t b, std::size_t e) {
    std::size_t start = b;
    for (std::size_t j = b + 1; j < e; ++j) {
        const auto prev = static_cast<unsigned char>(src[j - 1]);
        const auto cur = static_cast<unsigned char>(src[j]);
        const bool lower_to_upper = (is_lower(prev) || is_digit(prev)) && is_upper(cur);
        const bool acronym_end = is_upper(prev) && is_upper(cur) && j + 1 < e &&
                                 is_lower(static_cast<unsigned char>(src[j + 1]));
        if (lower_to_upper || acronym_end) {
            push(out, src, start, j);
            start = j;
        }
    }
    push(out, src, start, e);
}

void split_word(std::vector<Token>& out, const std::string& src, std::size_t b, std::size_t e) {
    std::size_t seg = b;
    for (std::size_t j = b; j < e; ++j) {
        if (src[j] == '_') {
            if (j > seg) split_humps(out, src, seg, j);
            push(out, src, j, j + 1);
            seg = j + 1;
        }
    }
    if (seg < e) split_humps(out, src, seg, e);
}

}  // namespace

TokenizedFunction::TokenizedFunction(std::string source, TokenizerId tokenizer,
                                     std::vector<Token> tokens)
    : source_(std::move(source)), tokenizer_(tokenizer), tokens_(std::move(tokens)) {
    lines_.reserve(tokens_.size());
    int line = 1;
    std::size_t cursor = 0;
    for (const auto& t : tokens_) {
        line += static_cast<int>(std::count(source_.begin() + static_cast<std::ptrdiff_t>(cursor),
                                            source_.begin() + static_cast<std::ptrdiff_t>(t.span.begin),
                                            '\n'));
        lines_.push_back(line);
        if (t.text == "\n") ++line;
        cursor = t.span.end;
    }
}

std::size_t TokenizedFunction::token_at(std::size_t pos) const noexcept {
    auto it = std::upper_bound(tokens_.begin(), tokens_.end(), pos,
                               [](std::size_t p, const Token& t) { return p < t.span.begin; });
    if (it == tokens_.begin()) return npos;
    --it;
    return it->span.contains(pos) ? static_cast<std::size_t>(it - tokens_.begin()) : npos;
}

std::vector<std::string> TokenizedFunction::texts() const {
    std::vector<std::string> out;
    out.reserve(tokens_.size());
    for (const auto& t : tokens_) out.push_back(t.text);
    return out;
}

TokenizedFunction tokenize(std::string source, TokenizerId tokenizer) {
    std::vector<Token> tokens;
    const std::size_t n = source.size();
    std::size_t i = 0;
    while (i < n) {
        const auto c = static_cast<unsigned char>(source[i]);
        if (c == '\n') {
            push(tokens, source, i, i + 1);
            ++i;
        } else if (is_blank(c)) {
            ++i;
        } else if (is_word_byte(c)) {
            std::size_t j = i + 1;
            while (j < n && is_word_byte(static_cast<unsigned char>(source[j]))) ++j;
            if (tokenizer == TokenizerId::Loc) {
                split_word(tokens, source, i, j);
            } else {
                push(tokens, source, i, j);
            }
            i = j;
        } else {
            const std::size_t len = operator_length(std::string_view(source).substr(i));
            push(tokens, source, i, i + len);
            i += len;
        }
    }
    return TokenizedFunction(std::move(source), tokenizer, std::move(tokens));
}

std::size_t translate_location(const TokenizedFunction& src, const TokenizedFunction& dst,
                               std::size_t index, Side side) {
    if (src.source() != dst.source())
        fail(ErrorKind::MismatchedSource, "token views describe different source texts");
    if (index >= src.size())
        fail(ErrorKind::InvalidArgument, "token index " + std::to_string(index) +
                                             " out of range for " + std::to_string(src.size()) +
                                             " tokens");
    const auto& span = src[index].span;
    const std::size_t pos = side == Side::Start ? span.begin : span.end - 1;
    const std::size_t hit = dst.token_at(pos);
    // Both views cover every non-blank byte, so a token byte is always covered.
    if (hit == TokenizedFunction::npos)
        fail(ErrorKind::MismatchedSource, "destination view does not cover byte " +
                                              std::to_string(pos));
    return hit;
}

std::string escape_text(std::string_view text) {
    std::string out;
    for (unsigned char c : text) {
        switch (c) {
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            case '\\': out += "\\\\"; break;
            default:
                if (c < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\x%02x", c);
                    out += buf;
                } else {
                    out += static_cast<char>(c);
                }
        }
    }
    return out;
}

std::string dump_tokens(const TokenizedFunction& tf) {
    std::string out;
    for (std::size_t i = 0; i < tf.size(); ++i) {
        const auto& t = tf[i];
        out += std::to_string(i) + '\t' + std::to_string(t.span.begin) + '\t' +
               std::to_string(t.span.end) + '\t' + escape_text(t.text) + '\n';
    }
    return out;
}

std::uint64_t token_stream_hash(const TokenizedFunction& tf) {
    std::uint64_t h = fnv1a64(to_string(tf.tokenizer()));
    for (const auto& t : tf.tokens()) {
        h = fnv1a64(t.text, h);
        h = mix64(h ^ t.span.begin);
        h = mix64(h ^ t.span.end);
    }
    return h;
}

}  // namespace tokfix
