#include "tokfix/embedding.hpp"
#include "tokfix/error.hpp"
#include "tokfix/localizer.hpp"

#include <doctest.h>

#include <cmath>

using namespace tokfix;

TEST_CASE("hashed vectors are unit norm and a pure function of text and seed") {
    HashedVocabulary a(64, 1), b(64, 1), c(64, 2);
    for (const char* t : {"get", "Property", "(", "\n", ""}) {
        const auto v = a.vector(t);
        CHECK(v.size() == 64);
        CHECK(std::abs(v.norm() - 1.0) < 1e-12);
        CHECK((v - b.vector(t)).norm() == 0.0);
        CHECK((v - c.vector(t)).norm() > 0.1);
    }
    CHECK((a.vector("get") - a.vector("set")).norm() > 0.1);
}

TEST_CASE("buckets fall inside the table") {
    HashedVocabulary v(8, 1);
    for (const char* t : {"a", "b", "ccc"}) CHECK(v.bucket(t, 17) < 17);
    CHECK(v.bucket("a", 17) == HashedVocabulary(8, 1).bucket("a", 17));
}

TEST_CASE("positional vectors are sinusoidal and scaled") {
    const auto p0 = positional_vector(0, 8, 1.0);
    CHECK(p0[0] == doctest::Approx(0.0));
    CHECK(p0[1] == doctest::Approx(1.0));
    const auto p3 = positional_vector(3, 8, 2.0);
    CHECK(p3[0] == doctest::Approx(2.0 * std::sin(3.0)));
    CHECK(p3[1] == doctest::Approx(2.0 * std::cos(3.0)));
    CHECK((positional_vector(3, 8, 1.0) - positional_vector(4, 8, 1.0)).norm() > 0.1);
}

TEST_CASE("repeated tokens get distinct rows through the positional encoding") {
    EmbeddingConfig cfg;
    cfg.dim = 32;
    const Localizer loc(LocalizerParams::initial(cfg, 8, 1));
    const auto tf = tokenize("void showDialog() { progressDialog().show(); }", TokenizerId::Loc);
    const auto e = loc.embed(tf);
    REQUIRE(tf[3].text == "()");
    REQUIRE(tf[7].text == "()");
    CHECK((e.rows.row(3) - e.rows.row(7)).norm() > 1e-3);

    cfg.positional = PositionalEncoding::None;
    const Localizer flat(LocalizerParams::initial(cfg, 8, 1));
    const auto f = flat.embed(tf);
    CHECK((f.rows.row(3) - f.rows.row(7)).norm() == 0.0);
}

TEST_CASE("comment tokens are appended after the code rows") {
    EmbeddingConfig cfg;
    cfg.dim = 16;
    const Localizer loc(LocalizerParams::initial(cfg, 4, 1));
    const auto tf = tokenize("a = b;", TokenizerId::Loc);
    const auto e = loc.embed(tf, std::string("use getValue here"));
    CHECK(e.n_code == tf.size());
    CHECK(e.n_context() == context_tokens(std::string("use getValue here")).size());
    CHECK(context_tokens(std::string("use getValue")) == std::vector<std::string>{"use", "get", "Value"});
    CHECK(context_tokens(std::nullopt).empty());
    CHECK_THROWS_AS(loc.embed(tokenize("", TokenizerId::Loc)), Error);
}

TEST_CASE("embedding config parses and rejects bad values") {
    EmbeddingConfig c;
    c.provider = EmbeddingProvider::TrainableTable;
    c.dim = 12;
    c.positional = PositionalEncoding::None;
    c.seed = 9;
    CHECK(embedding_config_from_json(to_json(c)) == c);
    CHECK(embedding_provider_from_string("HASHED") == EmbeddingProvider::Hashed);
    CHECK(embedding_provider_from_string("remote") == EmbeddingProvider::Remote);
    CHECK_THROWS_AS(embedding_provider_from_string("bert"), Error);
    CHECK_THROWS_AS(embedding_config_from_json({{"dim", 0}}), Error);
    CHECK_THROWS_AS(embedding_config_from_json({{"dim", "x"}}), Error);
}
