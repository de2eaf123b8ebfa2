#include "tokfix/corpus.hpp"
#include "tokfix/error.hpp"
#include "tokfix/synthetic.hpp"
#include "tokfix/util.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <set>

using namespace tokfix;

namespace {

std::string error_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

std::vector<BugFixSample> numbered(int n) {
    std::vector<BugFixSample> out;
    for (int i = 0; i < n; ++i) {
        BugFixSample s;
        s.id = "s" + std::to_string(i);
        s.buggy = "int f() { return " + std::to_string(i) + "; }";
        s.fixed = "int f() { return " + std::to_string(i + 1) + "; }";
        out.push_back(s);
    }
    return out;
}

}  // namespace

TEST_CASE("two valid records load in file order") {
    const auto samples = parse_corpus(
        R"({"id":"b","buggy":"x","fixed":"y"})"
        "\n\n"
        R"({"id":"a","buggy":"p\nq","fixed":"p\nr","comment":"c","buggy_lines":[2],"language_tag":"java"})"
        "\n",
        "mem");
    REQUIRE(samples.size() == 2);
    CHECK(samples[0].id == "b");
    CHECK(samples[1].id == "a");
    CHECK(samples[1].comment == "c");
    CHECK(samples[1].buggy_lines == std::vector<int>{2});
    CHECK(samples[1].language_tag == "java");
}

TEST_CASE("schema errors name the offending line") {
    const auto missing = error_of([] {
        parse_corpus(R"({"id":"a","buggy":"x","fixed":"y"})"
                     "\n"
                     R"({"id":"b","buggy":"x"})",
                     "c.jsonl");
    });
    CHECK(missing.find("c.jsonl:2") != std::string::npos);
    CHECK(missing.find("fixed") != std::string::npos);

    const auto range = error_of(
        [] { parse_corpus(R"({"id":"a","buggy":"l1\nl2\nl3","fixed":"y","buggy_lines":[99]})", "c.jsonl"); });
    CHECK(range.find("c.jsonl:1") != std::string::npos);
    CHECK(range.find("line index out of range") != std::string::npos);

    const auto dup = error_of([] {
        parse_corpus(R"({"id":"a","buggy":"x","fixed":"y"})"
                     "\n"
                     R"({"id":"a","buggy":"x","fixed":"z"})",
                     "c.jsonl");
    });
    CHECK(dup.find("c.jsonl:2") != std::string::npos);
    CHECK(dup.find("duplicate") != std::string::npos);

    const auto bad = error_of([] { parse_corpus("{not json", "c.jsonl"); });
    CHECK(bad.find("c.jsonl:1") != std::string::npos);

    CHECK_THROWS_AS(load_corpus("/nonexistent/corpus.jsonl"), Error);
}

TEST_CASE("unchanged pairs are accepted and flagged") {
    const auto s = parse_corpus(R"({"id":"a","buggy":"x","fixed":"x"})", "mem");
    REQUIRE(s.size() == 1);
    CHECK(s[0].unchanged());
}

TEST_CASE("write then load gives field-equal records") {
    auto samples = generate_corpus([] {
        MutationSpec spec;
        spec.functions_per_corpus = 50;
        return spec;
    }());
    samples[3].language_tag.reset();
    const auto dir = std::filesystem::temp_directory_path() / "tokfix_corpus_test";
    const auto path = (dir / "c.jsonl").string();
    write_corpus(path, samples);
    CHECK(load_corpus(path) == samples);
    std::filesystem::remove_all(dir);
}

TEST_CASE("ten samples split 8/1/1 and disjoint") {
    const auto samples = numbered(10);
    const auto s = split_corpus(samples, {0.8, 0.1, 0.1}, 7);
    CHECK(s.train.size() == 8);
    CHECK(s.validation.size() == 1);
    CHECK(s.test.size() == 1);
    std::set<std::string> all(s.train.begin(), s.train.end());
    all.insert(s.validation.begin(), s.validation.end());
    all.insert(s.test.begin(), s.test.end());
    CHECK(all.size() == 10);
}

TEST_CASE("splitting is deterministic and seed dependent") {
    const auto samples = numbered(200);
    const auto a = split_corpus(samples, {0.8, 0.1, 0.1}, 5);
    const auto b = split_corpus(samples, {0.8, 0.1, 0.1}, 5);
    CHECK(to_json(a).dump() == to_json(b).dump());
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto s = split_corpus(samples, {0.5, 0.25, 0.25}, seed);
        std::vector<std::string> ids = s.train;
        ids.insert(ids.end(), s.validation.begin(), s.validation.end());
        ids.insert(ids.end(), s.test.begin(), s.test.end());
        std::sort(ids.begin(), ids.end());
        CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
        CHECK(ids.size() == 200);
    }
    CHECK(to_json(split_corpus(samples, {0.8, 0.1, 0.1}, 6)).dump() != to_json(a).dump());
}

TEST_CASE("five thousand synthetic samples split 4000/500/500") {
    MutationSpec spec;
    spec.functions_per_corpus = 5000;
    const auto s = split_corpus(generate_corpus(spec), {0.8, 0.1, 0.1}, 1);
    CHECK(s.train.size() == 4000);
    CHECK(s.validation.size() == 500);
    CHECK(s.test.size() == 500);
}

TEST_CASE("split rejects bad ratios and empty corpora") {
    const auto samples = numbered(4);
    CHECK_THROWS_AS(split_corpus(samples, {0.5, 0.5, 0.5}, 1), Error);
    CHECK_THROWS_AS(split_corpus(samples, {1.2, -0.1, -0.1}, 1), Error);
    CHECK_THROWS_AS(split_corpus({}, {0.8, 0.1, 0.1}, 1), Error);
}

TEST_CASE("split files round trip and select checks ids") {
    const auto samples = numbered(10);
    const auto s = split_corpus(samples, {0.8, 0.1, 0.1}, 7);
    const auto dir = std::filesystem::temp_directory_path() / "tokfix_split_test";
    const auto p1 = (dir / "a.json").string();
    const auto p2 = (dir / "b.json").string();
    write_split(p1, s);
    write_split(p2, load_split(p1));
    CHECK(read_file(p1) == read_file(p2));
    const auto picked = select(samples, s.test);
    REQUIRE(picked.size() == 1);
    CHECK(picked[0].id == s.test[0]);
    CHECK_THROWS_AS(select(samples, {"nope"}), Error);
    std::filesystem::remove_all(dir);
}
