#include "tokfix/error.hpp"
#include "tokfix/eval.hpp"
#include "tokfix/region.hpp"
#include "tokfix/synthetic.hpp"

#include <doctest.h>
#include <oracles.hpp>

using namespace tokfix;
using Texts = std::vector<std::string>;

namespace {

RegionDecomposition extract(const std::string& b, const std::string& f, TokenizerId id = TokenizerId::Fix,
                            bool expand = true) {
    return extract_region(tokenize(b, id), tokenize(f, id), expand);
}

const char* kLine = "java.lang.String value = org.loklak.data.DAO.config.getProperty(key);";
const char* kLineFixed = "java.lang.String value = org.loklak.data.DAO.config.get(key);";

}  // namespace

TEST_CASE("extract_region agrees with the brute-force oracle") {
    std::mt19937_64 rng(2024);
    int checked = 0;
    for (int i = 0; i < 400; ++i) {
        const auto [b, f] = testing::random_pair(rng, 64);
        const auto tb = tokenize(b, TokenizerId::Fix);
        const auto tf = tokenize(f, TokenizerId::Fix);
        if (tb.texts() == tf.texts()) continue;
        const auto want = testing::brute_force_region(tb.texts(), tf.texts());
        const auto d = extract_region(tb, tf, false);
        REQUIRE(d.raw_prefix() == want.p);
        REQUIRE(d.raw_suffix() == want.s);
        CHECK(d.region().start == static_cast<std::ptrdiff_t>(want.p));
        CHECK(d.region().end == static_cast<std::ptrdiff_t>(tb.size() - want.s) - 1);
        ++checked;
    }
    CHECK(checked > 350);
}

TEST_CASE("config getter example splits around getProperty") {
    const auto d = extract(kLine, kLineFixed);
    CHECK(d.middle_token_texts() == Texts{"getProperty"});
    CHECK(d.fixed_middle_token_texts() == Texts{"get"});
    CHECK(d.suffix_token_texts() == Texts{"(", "key", ")", ";"});
    CHECK(d.prefix_text() == "java.lang.String value = org.loklak.data.DAO.config.");
    CHECK(d.prefix_token_texts().back() == ".");
    CHECK(d.prefix_token_texts()[d.prefix_tokens() - 2] == "config");
}

TEST_CASE("dialog example region runs from the first () to the second") {
    const auto d = extract(testing::kDialogBuggy, testing::kDialogFixed, TokenizerId::Loc);
    CHECK(d.region().start == 3);
    CHECK(d.region().end == 7);
    CHECK(d.region().tokenizer == TokenizerId::Loc);
}

TEST_CASE("fully replaced body gives the whole function") {
    const auto d = extract("a b c", "x y z");
    CHECK(d.region().start == 0);
    CHECK(d.region().end == 2);
    CHECK(d.prefix_tokens() == 0);
    CHECK(d.suffix_tokens() == 0);
}

TEST_CASE("pure insertions widen to one anchor token") {
    auto d = extract("a c", "a b c");
    CHECK(d.insertion());
    CHECK(d.widened());
    CHECK(d.region().start == 1);
    CHECK(d.region().end == 1);
    CHECK(d.middle_token_texts() == Texts{"c"});
    CHECK(d.fixed_middle_token_texts() == Texts{"b", "c"});

    d = extract("a b", "a b c");
    CHECK(d.region().start == 1);
    CHECK(d.region().end == 1);
    CHECK(d.fixed_middle_token_texts() == Texts{"b", "c"});

    d = extract("a c", "a b c", TokenizerId::Fix, false);
    CHECK(d.region().empty());
    CHECK(d.region().start == 1);
    CHECK(d.middle_tokens() == 0);
    CHECK(d.fixed_middle_token_texts() == Texts{"b"});
}

TEST_CASE("identical token sequences are degenerate") {
    try {
        extract("a  b", "a b");
        FAIL("expected degenerate-pair");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DegeneratePair);
    }
}

TEST_CASE("views from different tokenizers are rejected") {
    CHECK_THROWS_AS(extract_region(tokenize("a", TokenizerId::Loc), tokenize("b", TokenizerId::Fix)), Error);
}

TEST_CASE("both reassembly identities hold over a synthetic corpus") {
    MutationSpec spec;
    spec.functions_per_corpus = 500;
    for (const auto& s : generate_corpus(spec)) {
        for (auto id : {TokenizerId::Loc, TokenizerId::Fix}) {
            const auto b = tokenize(s.buggy, id);
            const auto f = tokenize(s.fixed, id);
            const auto d = extract_region(b, f);
            auto buggy = d.prefix_token_texts();
            auto fixed = buggy;
            for (const auto& t : d.middle_token_texts()) buggy.push_back(t);
            for (const auto& t : d.fixed_middle_token_texts()) fixed.push_back(t);
            for (const auto& t : d.suffix_token_texts()) {
                buggy.push_back(t);
                fixed.push_back(t);
            }
            REQUIRE(buggy == b.texts());
            REQUIRE(fixed == f.texts());
        }
    }
}

TEST_CASE("reconstruct_fix rebuilds the fixed line from the generated middle") {
    const auto d = extract(kLine, kLineFixed);
    CHECK(reconstruct_fix(d, "get") == kLineFixed);
    CHECK(reconstruct_fix(d, d.fixed_middle_text()) == kLineFixed);

    const auto multi = extract(testing::kConfigBuggy, testing::kConfigFixed);
    CHECK(reconstruct_fix(multi, "get") == testing::kConfigFixed);
}

TEST_CASE("deleting the region concatenates prefix and suffix") {
    const auto d = extract("f(a);\ncleanup();\nreturn a;", "f(a);\nreturn a;", TokenizerId::Fix, false);
    CHECK(exact_match(reconstruct_fix(d, ""), "f(a);\nreturn a;"));
}

TEST_CASE("a cut on a word boundary keeps words apart") {
    CHECK(join_at_cut("return", "x;", true) == "return x;");
    CHECK(join_at_cut("get", "Value", false) == "getValue");
    CHECK(join_at_cut("a(", "b", true) == "a(b");
}

TEST_CASE("decompose_at cuts at an arbitrary region") {
    const auto b = tokenize("int x = a + b ;", TokenizerId::Fix);
    BugRegion r{3, 5, TokenizerId::Fix};
    const auto d = decompose_at(b, r);
    CHECK(d.prefix_token_texts() == Texts{"int", "x", "="});
    CHECK(d.middle_token_texts() == Texts{"a", "+", "b"});
    CHECK(d.suffix_token_texts() == Texts{";"});
    CHECK(d.truncated_buggy_text() == "a + b ;");
    CHECK_FALSE(d.fixed().has_value());
    CHECK_THROWS_AS(decompose_at(b, BugRegion{3, 9, TokenizerId::Fix}), Error);
    CHECK_THROWS_AS(decompose_at(b, BugRegion{3, 5, TokenizerId::Loc}), Error);
}

TEST_CASE("translate_region maps a hump region onto the whole identifier") {
    const std::string src = "config.getProperty(key);";
    const auto loc = tokenize(src, TokenizerId::Loc);
    const auto fix = tokenize(src, TokenizerId::Fix);
    const auto r = translate_region(loc, fix, BugRegion{3, 3, TokenizerId::Loc});
    CHECK(r == BugRegion{2, 2, TokenizerId::Fix});
    const auto e = translate_region(loc, fix, BugRegion{4, 3, TokenizerId::Loc});
    CHECK(e.empty());
    CHECK(e.start == 3);
    CHECK_THROWS_AS(translate_region(loc, fix, BugRegion{3, 3, TokenizerId::Fix}), Error);
    CHECK_THROWS_AS(translate_region(loc, fix, BugRegion{40, 40, TokenizerId::Loc}), Error);
}

TEST_CASE("oracle records carry the raw affix lengths") {
    const auto d = extract("a c", "a b c");
    const auto j = oracle_record("id1", d);
    CHECK(j["id"] == "id1");
    CHECK(j["tokenizer"] == to_string(TokenizerId::Fix));
    CHECK(j["start"] == 1);
    CHECK(j["end"] == 1);
    CHECK(j["empty"] == false);
    CHECK(j["p"] == 1);
    CHECK(j["s"] == 1);
    CHECK(j["insertion"] == true);
}
