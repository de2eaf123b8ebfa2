#include "tokfix/synthetic.hpp"

#include "tokfix/error.hpp"
#include "tokfix/util.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <set>

namespace tokfix {

const char* to_string(MutationKind kind) noexcept {
    switch (kind) {
        case MutationKind::IdentRename: return "IDENT_RENAME";
        case MutationKind::OperatorSwap: return "OPERATOR_SWAP";
        case MutationKind::CallRename: return "CALL_RENAME";
        case MutationKind::StatementDelete: return "STATEMENT_DELETE";
        case MutationKind::StatementInsert: return "STATEMENT_INSERT";
        case MutationKind::LiteralChange: return "LITERAL_CHANGE";
    }
    return "?";
}

MutationKind mutation_kind_from_string(const std::string& s) {
    for (auto k : {MutationKind::IdentRename, MutationKind::OperatorSwap, MutationKind::CallRename,
                   MutationKind::StatementDelete, MutationKind::StatementInsert,
                   MutationKind::LiteralChange}) {
        if (s == to_string(k)) return k;
    }
    fail(ErrorKind::Config, "synthetic.kinds: unknown mutation kind '" + s + "'");
}

MutationSpec MutationSpec::camel_case_discrepancy(std::uint64_t seed, int functions) {
    MutationSpec spec;
    spec.seed = seed;
    spec.functions_per_corpus = functions;
    spec.kinds = {{MutationKind::CallRename, 0.6},
                  {MutationKind::IdentRename, 0.2},
                  {MutationKind::OperatorSwap, 0.2}};
    spec.call_insert_fraction = 0.5;
    spec.id_prefix = "camel";
    return spec;
}

nlohmann::json to_json(const MutationSpec& spec) {
    nlohmann::json kinds = nlohmann::json::object();
    for (const auto& [k, w] : spec.kinds) kinds[to_string(k)] = w;
    return {{"kinds", kinds},
            {"seed", spec.seed},
            {"functions_per_corpus", spec.functions_per_corpus},
            {"min_lines", spec.min_lines},
            {"max_lines", spec.max_lines},
            {"identifiers", spec.identifiers},
            {"comment_fraction", spec.comment_fraction},
            {"call_insert_fraction", spec.call_insert_fraction},
            {"id_prefix", spec.id_prefix}};
}

MutationSpec mutation_spec_from_json(const nlohmann::json& j) {
    MutationSpec s;
    try {
        if (j.contains("kinds")) {
            s.kinds.clear();
            for (const auto& [name, w] : j.at("kinds").items())
                s.kinds[mutation_kind_from_string(name)] = w.get<double>();
        }
        if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("functions_per_corpus")) s.functions_per_corpus = j.at("functions_per_corpus").get<int>();
        if (j.contains("min_lines")) s.min_lines = j.at("min_lines").get<int>();
        if (j.contains("max_lines")) s.max_lines = j.at("max_lines").get<int>();
        if (j.contains("identifiers")) s.identifiers = j.at("identifiers").get<std::vector<std::string>>();
        if (j.contains("comment_fraction")) s.comment_fraction = j.at("comment_fraction").get<double>();
        if (j.contains("call_insert_fraction")) s.call_insert_fraction = j.at("call_insert_fraction").get<double>();
        if (j.contains("id_prefix")) s.id_prefix = j.at("id_prefix").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("synthetic: ") + e.what());
    }
    return s;
}

std::optional<SyntheticTruth> synthetic_truth(const BugFixSample& sample) {
    if (!sample.meta || !sample.meta->is_object() || !sample.meta->contains("kind")) return std::nullopt;
    const auto& m = *sample.meta;
    SyntheticTruth t;
    t.kind = mutation_kind_from_string(m.at("kind").get<std::string>());
    t.loc_span = {m.at("loc_span")[0].get<std::size_t>(), m.at("loc_span")[1].get<std::size_t>()};
    t.fix_span = {m.at("fix_span")[0].get<std::size_t>(), m.at("fix_span")[1].get<std::size_t>()};
    return t;
}

BugRegion region_from_span(const TokenizedFunction& buggy, const CharSpan& span) {
    BugRegion r;
    r.tokenizer = buggy.tokenizer();
    if (span.size() > 0) {
        r.start = static_cast<std::ptrdiff_t>(buggy.token_at(span.begin));
        r.end = static_cast<std::ptrdiff_t>(buggy.token_at(span.end - 1));
        return r;
    }
    std::size_t k = 0;
    while (k < buggy.size() && buggy[k].span.begin < span.begin) ++k;
    if (k == buggy.size() && k > 0) --k;
    r.start = r.end = static_cast<std::ptrdiff_t>(k);
    return r;
}

namespace {

enum class Role { Plain, Var, Call, Op, Literal };

struct Piece {
    std::string text;
    Role role = Role::Plain;
    bool space_before = false;
};

struct Line {
    int indent = 0;
    std::vector<Piece> pieces;
};

struct Rendered {
    std::string text;
    // Byte offset of every piece, by line then piece.
    std::vector<std::vector<std::size_t>> offsets;
    std::vector<std::size_t> line_start;  // first non-indent byte
};

Rendered render(const std::vector<Line>& lines) {
    Rendered r;
    for (std::size_t li = 0; li < lines.size(); ++li) {
        if (li > 0) r.text += '\n';
        r.text.append(static_cast<std::size_t>(lines[li].indent) * 4, ' ');
        r.line_start.push_back(r.text.size());
        std::vector<std::size_t> offs;
        for (std::size_t pi = 0; pi < lines[li].pieces.size(); ++pi) {
            const auto& p = lines[li].pieces[pi];
            if (pi > 0 && p.space_before) r.text += ' ';
            offs.push_back(r.text.size());
            r.text += p.text;
        }
        r.offsets.push_back(std::move(offs));
    }
    return r;
}

std::string line_text(const Line& line) {
    std::string out;
    for (std::size_t i = 0; i < line.pieces.size(); ++i) {
        if (i > 0 && line.pieces[i].space_before) out += ' ';
        out += line.pieces[i].text;
    }
    return out;
}

std::string capitalize(std::string s) {
    if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
    return s;
}

constexpr std::array<const char*, 10> kVerbs = {"get",   "load",   "find",  "compute", "read",
                                                "update", "build", "parse", "check",   "apply"};
constexpr std::array<const char*, 4> kObjects = {"logger", "cache", "store", "registry"};
constexpr std::array<const char*, 5> kLiterals = {"0", "1", "2", "10", "100"};
// Tokens below never occur in the templates, so a buggy version is always a
// genuine token-level change.
constexpr std::array<const char*, 4> kStaleHumps = {"Old", "Tmp", "Prev", "Copy"};
constexpr std::array<const char*, 5> kBugHumps = {"Property", "Unsafe", "Legacy", "Internal", "Raw"};
constexpr std::array<const char*, 4> kFixHumps = {"Safe", "Checked", "Strict", "Cached"};
constexpr std::array<const char*, 5> kBadLiterals = {"99", "1024", "4096", "65535", "31"};

struct OpSwap {
    const char* good;
    const char* bad;
};
constexpr std::array<OpSwap, 6> kOpSwaps = {{{"+", "-"}, {"*", "/"}, {"<", "<="},
                                             {"==", "!="}, {">", ">="}, {"&&", "||"}}};

struct Gen {
    std::mt19937_64 rng;
    const MutationSpec& spec;

    std::size_t pick(std::size_t n) { return static_cast<std::size_t>(uniform_below(rng, n)); }
    template <typename C>
    auto choose(const C& c) -> decltype(c[0]) {
        return c[pick(c.size())];
    }
    bool coin(double p) { return uniform01(rng) < p; }

    std::string noun() { return spec.identifiers[pick(spec.identifiers.size())]; }

    std::string fresh_var(std::set<std::string>& used) {
        for (int attempt = 0; attempt < 64; ++attempt) {
            std::string name = noun();
            if (coin(0.4)) name += capitalize(noun());
            if (used.insert(name).second) return name;
        }
        std::string name = noun() + std::to_string(used.size());
        used.insert(name);
        return name;
    }

    std::string call_name() {
        std::string name = choose(kVerbs);
        if (coin(0.5)) name += capitalize(noun());
        return name;
    }
};

Piece plain(std::string t, bool sp = true) { return Piece{std::move(t), Role::Plain, sp}; }
Piece var(std::string t, bool sp = true) { return Piece{std::move(t), Role::Var, sp}; }
Piece call(std::string t, bool sp = true) { return Piece{std::move(t), Role::Call, sp}; }
Piece op(std::string t) { return Piece{std::move(t), Role::Op, true}; }
Piece lit(std::string t) { return Piece{std::move(t), Role::Literal, true}; }

std::vector<Line> make_function(Gen& g) {
    std::set<std::string> used;
    std::vector<std::string> vars;
    std::vector<Line> lines;

    const std::string fname = std::string(g.choose(kVerbs)) + capitalize(g.noun()) + capitalize(g.noun());
    const std::string p1 = g.fresh_var(used);
    const std::string p2 = g.fresh_var(used);
    vars = {p1, p2};
    lines.push_back({0,
                     {plain("public", false), plain("int"), plain(fname), plain("(", false),
                      plain("int", false), var(p1), plain(",", false), plain("int"), var(p2),
                      plain(")", false), plain("{")}});

    const int body = g.spec.min_lines +
                     static_cast<int>(g.pick(static_cast<std::size_t>(g.spec.max_lines - g.spec.min_lines + 1)));
    auto any_var = [&]() { return vars[g.pick(vars.size())]; };
    auto assign_call = [&](int indent) {
        const std::string v = any_var();
        return Line{indent, {var(v, false), plain("="), call(g.call_name()), plain("(", false),
                             var(any_var(), false), plain(")", false), plain(";", false)}};
    };

    for (int s = 0; s < body; ++s) {
        switch (g.pick(6)) {
            case 0: {
                const std::string v = g.fresh_var(used);
                lines.push_back({1, {plain("int", false), var(v), plain("="), call(g.call_name()),
                                     plain("(", false), var(any_var(), false), plain(")", false),
                                     plain(";", false)}});
                vars.push_back(v);
                break;
            }
            case 1: {
                const std::string v = any_var();
                lines.push_back({1, {var(v, false), plain("="), var(v), op(g.coin(0.5) ? "+" : "*"),
                                     var(any_var()), plain(";", false)}});
                break;
            }
            case 2: {
                const std::string v = any_var();
                lines.push_back({1, {var(v, false), plain("="), var(v), op("+"), lit(g.choose(kLiterals)),
                                     plain(";", false)}});
                break;
            }
            case 3: {
                const char* cmp = g.coin(0.5) ? "<" : "==";
                lines.push_back({1, {plain("if", false), plain("("), var(any_var(), false), op(cmp),
                                     lit(g.choose(kLiterals)), plain(")", false), plain("{")}});
                lines.push_back(assign_call(2));
                lines.push_back({1, {plain("}", false)}});
                break;
            }
            case 4: {
                lines.push_back({1, {plain(g.choose(kObjects), false), plain(".", false),
                                     call(g.call_name(), false), plain("(", false),
                                     var(any_var(), false), plain(")", false), plain(";", false)}});
                break;
            }
            default: {
                lines.push_back({1, {plain("if", false), plain("("), var(any_var(), false), op(">"),
                                     lit(g.choose(kLiterals)), op("&&"), var(any_var()), op("<"),
                                     var(any_var()), plain(")", false), plain("{")}});
                lines.push_back(assign_call(2));
                lines.push_back({1, {plain("}", false)}});
                break;
            }
        }
    }
    lines.push_back({1, {plain("return", false), var(any_var()), plain(";", false)}});
    lines.push_back({0, {plain("}", false)}});
    return lines;
}

struct Site {
    std::size_t line;
    std::size_t piece;
};

std::vector<Site> sites_with(const std::vector<Line>& lines, Role role) {
    std::vector<Site> out;
    for (std::size_t li = 0; li < lines.size(); ++li)
        for (std::size_t pi = 0; pi < lines[li].pieces.size(); ++pi)
            if (lines[li].pieces[pi].role == role) out.push_back({li, pi});
    return out;
}

int line_number(const std::string& text, std::size_t pos) {
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

struct Mutated {
    std::string buggy;
    std::string fixed;
    CharSpan loc_span;
    CharSpan fix_span;
    std::string old_text;
    std::string new_text;
};

std::optional<Mutated> mutate(Gen& g, const std::vector<Line>& tmpl, MutationKind kind) {
    std::vector<Line> fixed = tmpl;
    std::vector<Line> buggy = tmpl;
    Mutated m;

    auto word_site = [&](Role role) -> std::optional<Site> {
        auto sites = sites_with(tmpl, role);
        if (sites.empty()) return std::nullopt;
        return sites[g.pick(sites.size())];
    };

    switch (kind) {
        case MutationKind::IdentRename:
        case MutationKind::CallRename:
        case MutationKind::OperatorSwap:
        case MutationKind::LiteralChange: {
            const Role role = kind == MutationKind::IdentRename   ? Role::Var
                              : kind == MutationKind::CallRename  ? Role::Call
                              : kind == MutationKind::OperatorSwap ? Role::Op
                                                                   : Role::Literal;
            const auto site = word_site(role);
            if (!site) return std::nullopt;
            auto& bp = buggy[site->line].pieces[site->piece];
            auto& fp = fixed[site->line].pieces[site->piece];
            // Byte range of the changed humps inside the buggy word, for LOC.
            std::size_t loc_from = 0, loc_to = 0;
            if (kind == MutationKind::IdentRename) {
                loc_from = bp.text.size();
                bp.text += g.choose(kStaleHumps);
                loc_to = bp.text.size();
            } else if (kind == MutationKind::CallRename) {
                if (g.coin(g.spec.call_insert_fraction)) {
                    fp.text += g.choose(kFixHumps);
                    loc_from = loc_to = bp.text.size();
                } else {
                    loc_from = bp.text.size();
                    bp.text += g.choose(kBugHumps);
                    loc_to = bp.text.size();
                }
            } else if (kind == MutationKind::OperatorSwap) {
                for (const auto& sw : kOpSwaps)
                    if (bp.text == sw.good) {
                        bp.text = sw.bad;
                        break;
                    }
                loc_to = bp.text.size();
            } else {
                bp.text = g.choose(kBadLiterals);
                loc_to = bp.text.size();
            }
            const auto rb = render(buggy);
            const std::size_t at = rb.offsets[site->line][site->piece];
            m.buggy = rb.text;
            m.fixed = render(fixed).text;
            m.fix_span = {at, at + bp.text.size()};
            m.loc_span = {at + loc_from, at + loc_to};
            m.old_text = bp.text;
            m.new_text = fp.text;
            break;
        }
        case MutationKind::StatementDelete:
        case MutationKind::StatementInsert: {
            // Between the header and the closing brace.
            const std::size_t k = 1 + g.pick(tmpl.size() - 1);
            const std::string v = tmpl[0].pieces[5].text;  // first parameter
            Line extra;
            extra.indent = std::max(1, tmpl[k].indent);
            if (kind == MutationKind::StatementDelete) {
                switch (g.pick(5)) {
                    case 0: extra.pieces = {plain("cleanup", false), plain("(", false), plain(")", false)}; break;
                    case 1: extra.pieces = {plain("debugLog", false), plain("(", false), var(v, false), plain(")", false)}; break;
                    case 2: extra.pieces = {plain("resetState", false), plain("(", false), plain(")", false)}; break;
                    case 3: extra.pieces = {plain("flushCache", false), plain("(", false), plain(")", false)}; break;
                    default: extra.pieces = {plain("traceCall", false), plain("(", false), var(v, false), plain(")", false)}; break;
                }
            } else {
                switch (g.pick(4)) {
                    case 0: extra.pieces = {plain("validate", false), plain("(", false), var(v, false), plain(")", false)}; break;
                    case 1: extra.pieces = {plain("ensureOpen", false), plain("(", false), plain(")", false)}; break;
                    case 2: extra.pieces = {plain("checkBounds", false), plain("(", false), var(v, false), plain(")", false)}; break;
                    default: extra.pieces = {plain("lockState", false), plain("(", false), plain(")", false)}; break;
                }
            }
            extra.pieces.push_back(plain(";", false));
            const auto pos = static_cast<std::ptrdiff_t>(k);
            if (kind == MutationKind::StatementDelete) {
                buggy.insert(buggy.begin() + pos, extra);
                const auto rb = render(buggy);
                const std::size_t b = rb.line_start[k];
                const std::size_t e = rb.line_start[k + 1] - static_cast<std::size_t>(buggy[k + 1].indent) * 4;
                m.buggy = rb.text;
                m.fixed = render(fixed).text;
                m.fix_span = m.loc_span = {b, e};  // through the extra line's newline
                m.old_text = line_text(extra);
                m.new_text = "nothing";
            } else {
                fixed.insert(fixed.begin() + pos, extra);
                const auto rb = render(buggy);
                const std::size_t c = rb.line_start[k];
                m.buggy = rb.text;
                m.fixed = render(fixed).text;
                m.fix_span = m.loc_span = {c, c};
                m.old_text = "nothing";
                m.new_text = line_text(extra);
            }
            break;
        }
    }
    return m;
}

MutationKind pick_kind(Gen& g, const std::vector<std::pair<MutationKind, double>>& weights, double total) {
    double r = uniform01(g.rng) * total;
    for (const auto& [k, w] : weights) {
        if (r < w) return k;
        r -= w;
    }
    return weights.back().first;
}

}  // namespace

std::vector<BugFixSample> generate_corpus(const MutationSpec& spec) {
    if (spec.identifiers.empty()) fail(ErrorKind::Config, "synthetic: identifier vocabulary is empty");
    if (spec.min_lines < 1 || spec.max_lines < spec.min_lines)
        fail(ErrorKind::Config, "synthetic: invalid lines_per_function range");
    if (spec.functions_per_corpus < 0) fail(ErrorKind::Config, "synthetic: negative corpus size");
    std::vector<std::pair<MutationKind, double>> weights;
    double total = 0.0;
    for (const auto& [k, w] : spec.kinds) {
        if (w < 0.0) fail(ErrorKind::Config, "synthetic: negative weight for " + std::string(to_string(k)));
        if (w > 0.0) {
            weights.emplace_back(k, w);
            total += w;
        }
    }
    if (weights.empty()) fail(ErrorKind::Config, "synthetic: no mutation kind has positive weight");

    std::vector<BugFixSample> out;
    out.reserve(static_cast<std::size_t>(spec.functions_per_corpus));
    for (int i = 0; i < spec.functions_per_corpus; ++i) {
        // Independent stream per sample, so shards can be generated separately.
        Gen g{std::mt19937_64(mix64(spec.seed) ^ mix64(static_cast<std::uint64_t>(i) + 1)), spec};
        std::optional<Mutated> m;
        MutationKind kind = weights.front().first;
        while (!m) {
            const auto tmpl = make_function(g);
            for (int attempt = 0; attempt < 8 && !m; ++attempt) {
                kind = pick_kind(g, weights, total);
                m = mutate(g, tmpl, kind);
            }
        }

        BugFixSample s;
        char id[32];
        std::snprintf(id, sizeof id, "%06d", i);
        s.id = spec.id_prefix + "-" + id;
        s.buggy = m->buggy;
        s.fixed = m->fixed;
        s.language_tag = "java";

        const std::size_t anchor = m->loc_span.begin;
        const int first = line_number(s.buggy, anchor);
        const int last = m->loc_span.size() > 0 ? line_number(s.buggy, m->loc_span.end - 1) : first;
        std::vector<int> lines;
        for (int l = first; l <= last; ++l) lines.push_back(l);
        s.buggy_lines = lines;
        if (g.coin(spec.comment_fraction)) {
            s.comment = "change " + m->old_text + " to " + m->new_text + " on line " + std::to_string(first);
        }
        s.meta = nlohmann::json{{"kind", to_string(kind)},
                                {"loc_span", {m->loc_span.begin, m->loc_span.end}},
                                {"fix_span", {m->fix_span.begin, m->fix_span.end}}};
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace tokfix
