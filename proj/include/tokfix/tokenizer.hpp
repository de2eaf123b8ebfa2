#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tokfix {

/// Which tokenizer produced a token stream.
///  - Loc: fine-grained; identifiers split at camelCase humps and underscores.
///  - Fix: coarse; identifiers stay whole.
enum class TokenizerId { Loc, Fix };

const char* to_string(TokenizerId id) noexcept;
TokenizerId tokenizer_from_string(std::string_view name);

/// Half-open byte interval [begin, end) into the source text.
struct CharSpan {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end - begin; }
    bool contains(std::size_t pos) const noexcept { return pos >= begin && pos < end; }
    bool operator==(const CharSpan&) const = default;
};

struct Token {
    std::string text;
    CharSpan span;

    bool operator==(const Token&) const = default;
};

/// A source string together with its token stream under one tokenizer.
/// Offsets are byte offsets; bytes >= 0x80 are treated as identifier
/// characters, so multi-byte UTF-8 sequences are never split.
class TokenizedFunction {
public:
    TokenizedFunction() = default;
    TokenizedFunction(std::string source, TokenizerId tokenizer, std::vector<Token> tokens);

    const std::string& source() const noexcept { return source_; }
    TokenizerId tokenizer() const noexcept { return tokenizer_; }
    const std::vector<Token>& tokens() const noexcept { return tokens_; }
    std::size_t size() const noexcept { return tokens_.size(); }
    bool empty() const noexcept { return tokens_.empty(); }
    const Token& operator[](std::size_t i) const { return tokens_[i]; }

    /// 1-based line number of token `i`. A newline token belongs to the line
    /// it terminates.
    int line_of(std::size_t i) const { return lines_[i]; }

    /// Index of the token whose span contains byte `pos`, or npos.
    std::size_t token_at(std::size_t pos) const noexcept;

    /// Token texts only.
    std::vector<std::string> texts() const;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    std::string source_;
    TokenizerId tokenizer_ = TokenizerId::Fix;
    std::vector<Token> tokens_;
    std::vector<int> lines_;
};

TokenizedFunction tokenize(std::string source, TokenizerId tokenizer);

/// Maps a token index from one view of a source onto another view of the same
/// source through byte offsets. START picks the destination token containing
/// the first byte of the source token, END the one containing its last byte.
enum class Side { Start, End };

std::size_t translate_location(const TokenizedFunction& src, const TokenizedFunction& dst,
                               std::size_t index, Side side);

/// One token per line: "index\tbegin\tend\tescaped-text".
std::string dump_tokens(const TokenizedFunction& tf);

/// Stable hash of the token stream (texts and spans).
std::uint64_t token_stream_hash(const TokenizedFunction& tf);

/// Word characters: [A-Za-z0-9_$] and any byte >= 0x80.
bool is_word_byte(unsigned char c) noexcept;

std::string escape_text(std::string_view text);

}  // namespace tokfix
