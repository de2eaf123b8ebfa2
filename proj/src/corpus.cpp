#include "tokfix/corpus.hpp"

#include "tokfix/error.hpp"
#include "tokfix/util.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace tokfix {

using nlohmann::json;

std::size_t line_count(const std::string& text) {
    if (text.empty()) return 0;
    std::size_t lines = 1;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\n' && i + 1 < text.size()) ++lines;
    }
    return lines;
}

json to_json(const BugFixSample& s) {
    json j;
    j["id"] = s.id;
    j["buggy"] = s.buggy;
    j["fixed"] = s.fixed;
    if (s.comment) j["comment"] = *s.comment;
    if (s.buggy_lines) j["buggy_lines"] = *s.buggy_lines;
    if (s.language_tag) j["language_tag"] = *s.language_tag;
    if (s.meta) j["meta"] = *s.meta;
    return j;
}

namespace {

std::string required_string(const json& r, const char* key, const std::string& where) {
    auto it = r.find(key);
    if (it == r.end()) fail(ErrorKind::Schema, where + ": missing required field '" + key + "'");
    if (!it->is_string()) fail(ErrorKind::Schema, where + ": field '" + key + "' must be a string");
    return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& r, const char* key,
                                           const std::string& where) {
    auto it = r.find(key);
    if (it == r.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) fail(ErrorKind::Schema, where + ": field '" + key + "' must be a string");
    return it->get<std::string>();
}

}  // namespace

BugFixSample sample_from_json(const json& r, const std::string& where) {
    if (!r.is_object()) fail(ErrorKind::Schema, where + ": record is not an object");
    BugFixSample s;
    s.id = required_string(r, "id", where);
    s.buggy = required_string(r, "buggy", where);
    s.fixed = required_string(r, "fixed", where);
    if (s.id.empty()) fail(ErrorKind::Schema, where + ": empty id");
    if (s.buggy.empty()) fail(ErrorKind::Schema, where + ": empty buggy function");
    if (s.fixed.empty()) fail(ErrorKind::Schema, where + ": empty fixed function");
    s.comment = optional_string(r, "comment", where);
    s.language_tag = optional_string(r, "language_tag", where);

    if (auto it = r.find("buggy_lines"); it != r.end() && !it->is_null()) {
        if (!it->is_array()) fail(ErrorKind::Schema, where + ": buggy_lines must be an array");
        const auto lines = static_cast<long long>(line_count(s.buggy));
        std::vector<int> out;
        for (const auto& v : *it) {
            if (!v.is_number_integer())
                fail(ErrorKind::Schema, where + ": buggy_lines entries must be integers");
            const auto k = v.get<long long>();
            if (k < 1 || k > lines)
                fail(ErrorKind::Schema, where + ": buggy_lines entry " + std::to_string(k) +
                                            " line index out of range [1, " +
                                            std::to_string(lines) + "]");
            out.push_back(static_cast<int>(k));
        }
        s.buggy_lines = std::move(out);
    }
    if (auto it = r.find("meta"); it != r.end() && !it->is_null()) s.meta = *it;
    return s;
}

std::vector<BugFixSample> parse_corpus(const std::string& text, const std::string& origin) {
    std::vector<BugFixSample> out;
    std::unordered_map<std::string, std::size_t> seen;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const std::string where = origin + ":" + std::to_string(lineno);
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            fail(ErrorKind::Schema, where + ": malformed record (" + e.what() + ")");
        }
        auto sample = sample_from_json(record, where);
        if (auto [it, fresh] = seen.emplace(sample.id, lineno); !fresh) {
            fail(ErrorKind::Schema, where + ": duplicate id '" + sample.id +
                                        "' (first seen on line " + std::to_string(it->second) +
                                        ")");
        }
        out.push_back(std::move(sample));
    }
    return out;
}

std::vector<BugFixSample> load_corpus(const std::string& path) {
    return parse_corpus(read_file(path), path);
}

std::string serialize_corpus(const std::vector<BugFixSample>& samples) {
    std::string out;
    for (const auto& s : samples) {
        out += to_json(s).dump();
        out += '\n';
    }
    return out;
}

void write_corpus(const std::string& path, const std::vector<BugFixSample>& samples) {
    write_file(path, serialize_corpus(samples));
}

CorpusSplit split_corpus(const std::vector<BugFixSample>& samples,
                         const std::array<double, 3>& ratios, std::uint64_t seed) {
    if (samples.empty()) fail(ErrorKind::InvalidArgument, "cannot split an empty corpus");
    for (double r : ratios) {
        if (!(r >= 0.0) || !std::isfinite(r))
            fail(ErrorKind::InvalidArgument, "split ratios must be finite and non-negative");
    }
    if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
        fail(ErrorKind::InvalidArgument, "split ratios must sum to 1");

    std::vector<std::string> ids;
    ids.reserve(samples.size());
    for (const auto& s : samples) ids.push_back(s.id);

    std::mt19937_64 rng(seed);
    for (std::size_t i = ids.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_below(rng, i));
        std::swap(ids[i - 1], ids[j]);
    }

    const std::size_t n = ids.size();
    // The 1e-9 nudge keeps e.g. 10 * 0.8 from flooring to 7 after rounding.
    const auto n_train = std::min(n, static_cast<std::size_t>(std::floor(n * ratios[0] + 1e-9)));
    const auto n_val =
        std::min(n - n_train, static_cast<std::size_t>(std::floor(n * ratios[1] + 1e-9)));

    CorpusSplit split;
    split.seed = seed;
    split.ratios = ratios;
    split.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.validation.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                            ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    split.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
    return split;
}

json to_json(const CorpusSplit& s) {
    json j;
    j["seed"] = s.seed;
    j["ratios"] = s.ratios;
    j["train"] = s.train;
    j["validation"] = s.validation;
    j["test"] = s.test;
    return j;
}

CorpusSplit split_from_json(const json& j) {
    try {
        CorpusSplit s;
        s.seed = j.at("seed").get<std::uint64_t>();
        s.ratios = j.at("ratios").get<std::array<double, 3>>();
        s.train = j.at("train").get<std::vector<std::string>>();
        s.validation = j.at("validation").get<std::vector<std::string>>();
        s.test = j.at("test").get<std::vector<std::string>>();
        return s;
    } catch (const json::exception& e) {
        fail(ErrorKind::Schema, std::string("malformed split record: ") + e.what());
    }
}

void write_split(const std::string& path, const CorpusSplit& split) {
    write_file(path, to_json(split).dump(1) + "\n");
}

CorpusSplit load_split(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Schema, path + ": " + e.what());
    }
    return split_from_json(j);
}

std::vector<BugFixSample> select(const std::vector<BugFixSample>& samples,
                                 const std::vector<std::string>& ids) {
    std::unordered_map<std::string, const BugFixSample*> by_id;
    for (const auto& s : samples) by_id.emplace(s.id, &s);
    std::vector<BugFixSample> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) fail(ErrorKind::Schema, "split references unknown id '" + id + "'");
        out.push_back(*it->second);
    }
    return out;
}

}  // namespace tokfix
