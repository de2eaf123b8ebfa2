#include "tokfix/localizer.hpp"

#include "tokfix/adam.hpp"
#include "tokfix/log.hpp"
#include "tokfix/matrix_json.hpp"
#include "tokfix/util.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

namespace tokfix {

namespace {

constexpr const char* kCheckpointFormat = "tokfix-localizer";
constexpr int kCheckpointVersion = 1;

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, double stddev,
                              std::mt19937_64& rng) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = stddev * standard_normal(rng);
    return m;
}

double logit_scale(const LocalizerParams& p) {
    return p.scaled ? 1.0 / std::sqrt(static_cast<double>(p.attention_dim)) : 1.0;
}

std::vector<char> allowed_from(const ContextMask* mask, std::size_t n) {
    if (!mask) return std::vector<char>(n, 1);
    std::vector<char> allowed(n, 0);
    for (auto i : mask->allowed)
        if (i < n) allowed[i] = 1;
    return allowed;
}

void apply_structural(std::vector<char>& allowed, std::size_t query) {
    const std::size_t lo = query > 0 ? query - 1 : 0;
    for (std::size_t i = 0; i < lo && i < allowed.size(); ++i) allowed[i] = 0;
}

template <typename Derived>
bool finite(const Eigen::MatrixBase<Derived>& m) {
    return m.size() == 0 || m.allFinite();
}

}  // namespace

LocalizerParams LocalizerParams::initial(const EmbeddingConfig& embedding, int attention_dim,
                                         std::uint64_t seed) {
    if (attention_dim <= 0) fail(ErrorKind::Config, "localizer.attention_dim must be positive");
    LocalizerParams p;
    p.embedding = embedding;
    p.attention_dim = attention_dim;
    std::mt19937_64 rng(mix64(seed ^ 0x6c6f63616c697a65ULL));
    const int d = embedding.dim;
    const double stddev = 1.0 / std::sqrt(static_cast<double>(d));
    p.wq_pre = random_matrix(attention_dim, d, stddev, rng);
    p.wk_pre = random_matrix(attention_dim, d, stddev, rng);
    p.wq_suf = random_matrix(attention_dim, d, stddev, rng);
    p.wk_suf = random_matrix(attention_dim, d, stddev, rng);
    p.cls = random_matrix(d, 1, 1.0, rng).col(0);
    p.cls /= p.cls.norm();
    if (embedding.provider == EmbeddingProvider::TrainableTable) {
        p.table = random_matrix(embedding.table_buckets, d, stddev, rng);
    }
    return p;
}

bool LocalizerParams::all_finite() const {
    return finite(wq_pre) && finite(wk_pre) && finite(wq_suf) && finite(wk_suf) && finite(cls) &&
           finite(table);
}

bool LocalizerParams::operator==(const LocalizerParams& o) const {
    auto same = [](const auto& a, const auto& b) {
        return a.rows() == b.rows() && a.cols() == b.cols() && (a.size() == 0 || a == b);
    };
    return embedding == o.embedding && attention_dim == o.attention_dim && scaled == o.scaled &&
           structural_end_mask == o.structural_end_mask && same(wq_pre, o.wq_pre) &&
           same(wk_pre, o.wk_pre) && same(wq_suf, o.wq_suf) && same(wk_suf, o.wk_suf) &&
           same(cls, o.cls) && same(table, o.table);
}

nlohmann::json to_checkpoint(const LocalizerParams& p) {
    nlohmann::json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["embedding"] = to_json(p.embedding);
    j["dim"] = p.embedding.dim;
    j["attention_dim"] = p.attention_dim;
    j["scaled"] = p.scaled;
    j["structural_end_mask"] = p.structural_end_mask;
    j["weights"] = {{"wq_pre", matrix_json(p.wq_pre)}, {"wk_pre", matrix_json(p.wk_pre)},
                    {"wq_suf", matrix_json(p.wq_suf)}, {"wk_suf", matrix_json(p.wk_suf)},
                    {"cls", vector_json(p.cls)},       {"table", matrix_json(p.table)}};
    return j;
}

LocalizerParams localizer_from_checkpoint(const nlohmann::json& j) {
    try {
        if (j.at("format") != kCheckpointFormat)
            fail(ErrorKind::Schema, "not a localizer checkpoint");
        if (j.at("version").get<int>() != kCheckpointVersion)
            fail(ErrorKind::Schema, "unsupported localizer checkpoint version");
        LocalizerParams p;
        p.embedding = embedding_config_from_json(j.at("embedding"));
        p.attention_dim = j.at("attention_dim").get<int>();
        p.scaled = j.at("scaled").get<bool>();
        p.structural_end_mask = j.at("structural_end_mask").get<bool>();
        const auto& w = j.at("weights");
        p.wq_pre = matrix_from_json(w.at("wq_pre"), "wq_pre");
        p.wk_pre = matrix_from_json(w.at("wk_pre"), "wk_pre");
        p.wq_suf = matrix_from_json(w.at("wq_suf"), "wq_suf");
        p.wk_suf = matrix_from_json(w.at("wk_suf"), "wk_suf");
        p.cls = vector_from_json(w.at("cls"));
        p.table = matrix_from_json(w.at("table"), "table");
        const auto d = p.embedding.dim;
        for (const auto* m : {&p.wq_pre, &p.wk_pre, &p.wq_suf, &p.wk_suf}) {
            if (m->rows() != p.attention_dim || m->cols() != d)
                fail(ErrorKind::Schema, "checkpoint: weight shape does not match dims");
        }
        if (p.cls.size() != d) fail(ErrorKind::Schema, "checkpoint: cls has wrong dimension");
        return p;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Schema, std::string("malformed localizer checkpoint: ") + e.what());
    }
}

void save_localizer(const std::string& path, const LocalizerParams& params) {
    write_file(path, to_checkpoint(params).dump() + "\n");
}

LocalizerParams load_localizer(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::Schema, path + ": " + e.what());
    }
    return localizer_from_checkpoint(j);
}

ContextMask mask_from_lines(const TokenizedFunction& loc, const std::vector<int>& lines) {
    std::unordered_set<int> wanted(lines.begin(), lines.end());
    ContextMask mask;
    for (std::size_t i = 0; i < loc.size(); ++i)
        if (wanted.count(loc.line_of(i))) mask.allowed.push_back(i);
    return mask;
}

Eigen::VectorXd masked_softmax(const Eigen::VectorXd& logits, const std::vector<char>& allowed) {
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < logits.size(); ++i)
        if (allowed[static_cast<std::size_t>(i)]) top = std::max(top, logits[i]);
    if (top == -std::numeric_limits<double>::infinity())
        fail(ErrorKind::MaskEmpty, "no candidate token survives the context mask");
    Eigen::VectorXd p = Eigen::VectorXd::Zero(logits.size());
    double z = 0.0;
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
        if (!allowed[static_cast<std::size_t>(i)]) continue;
        p[i] = std::exp(logits[i] - top);
        z += p[i];
    }
    return p / z;
}

std::size_t argmax_first(const Eigen::VectorXd& v) {
    std::size_t best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (v[i] > v[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(i);
    return best;
}

void LocalizerGrads::zero_like(const LocalizerParams& p, Eigen::Index n_rows) {
    wq_pre = Eigen::MatrixXd::Zero(p.wq_pre.rows(), p.wq_pre.cols());
    wk_pre = Eigen::MatrixXd::Zero(p.wk_pre.rows(), p.wk_pre.cols());
    wq_suf = Eigen::MatrixXd::Zero(p.wq_suf.rows(), p.wq_suf.cols());
    wk_suf = Eigen::MatrixXd::Zero(p.wk_suf.rows(), p.wk_suf.cols());
    cls = Eigen::VectorXd::Zero(p.cls.size());
    rows = Eigen::MatrixXd::Zero(n_rows, p.embedding.dim);
}

double localizer_loss(const LocalizerParams& p, const Eigen::MatrixXd& rows, std::size_t n_code,
                      const Eigen::VectorXd& cls, std::size_t gt_start, std::ptrdiff_t gt_end,
                      const ContextMask* mask, LocalizerGrads* grads) {
    const auto n = static_cast<Eigen::Index>(n_code);
    const double c = logit_scale(p);
    const auto E = rows.topRows(n);
    if (grads) grads->zero_like(p, rows.rows());

    // Start head. Context tokens (the comment) shift the query by their mean.
    const Eigen::Index m = rows.rows() - n;
    Eigen::VectorXd q0 = cls;
    if (m > 0) q0 += rows.bottomRows(m).colwise().mean().transpose();
    const Eigen::VectorXd q_pre = p.wq_pre * q0;
    const Eigen::VectorXd u_pre = p.wk_pre.transpose() * q_pre;
    const Eigen::VectorXd l_pre = c * (E * u_pre);
    const auto allowed_pre = allowed_from(mask, n_code);
    Eigen::VectorXd a_pre = masked_softmax(l_pre, allowed_pre);
    double loss = -std::log(a_pre[static_cast<Eigen::Index>(gt_start)]);
    if (grads) {
        Eigen::VectorXd g = a_pre;
        g[static_cast<Eigen::Index>(gt_start)] -= 1.0;
        const Eigen::VectorXd g_u = c * (E.transpose() * g);
        grads->wk_pre += q_pre * g_u.transpose();
        const Eigen::VectorXd g_q = p.wk_pre * g_u;
        grads->wq_pre += g_q * q0.transpose();
        const Eigen::VectorXd g_q0 = p.wq_pre.transpose() * g_q;
        grads->cls += g_q0;
        if (m > 0) grads->rows.bottomRows(m).rowwise() += (g_q0 / static_cast<double>(m)).transpose();
        grads->rows.topRows(n) += c * g * u_pre.transpose();
    }

    if (gt_end < 0) return loss;

    // End head, teacher-forced on the true start.
    const Eigen::VectorXd e_q = E.row(static_cast<Eigen::Index>(gt_start)).transpose();
    const Eigen::VectorXd q_suf = p.wq_suf * e_q;
    const Eigen::VectorXd u_suf = p.wk_suf.transpose() * q_suf;
    const Eigen::VectorXd l_suf = c * (E * u_suf);
    auto allowed_suf = allowed_from(mask, n_code);
    if (p.structural_end_mask) apply_structural(allowed_suf, gt_start);
    Eigen::VectorXd a_suf = masked_softmax(l_suf, allowed_suf);
    loss -= std::log(a_suf[static_cast<Eigen::Index>(gt_end)]);
    if (grads) {
        Eigen::VectorXd g = a_suf;
        g[static_cast<Eigen::Index>(gt_end)] -= 1.0;
        const Eigen::VectorXd g_u = c * (E.transpose() * g);
        grads->wk_suf += q_suf * g_u.transpose();
        const Eigen::VectorXd g_q = p.wk_suf * g_u;
        grads->wq_suf += g_q * e_q.transpose();
        grads->rows.row(static_cast<Eigen::Index>(gt_start)) += (p.wq_suf.transpose() * g_q).transpose();
        grads->rows.topRows(n) += c * g * u_suf.transpose();
    }
    return loss;
}

Localizer::Localizer(LocalizerParams params)
    : params_(std::move(params)),
      vocab_(std::make_shared<HashedVocabulary>(params_.embedding.dim, params_.embedding.seed)) {}

const Eigen::VectorXd& Localizer::query_cls(const EmbeddedInput& e) const {
    return e.cls ? *e.cls : params_.cls;
}

EmbeddedInput Localizer::embed(const TokenizedFunction& loc,
                               const std::optional<std::string>& comment) const {
    if (loc.empty()) fail(ErrorKind::Precondition, "cannot embed a function without tokens");
    const auto& cfg = params_.embedding;
    const int d = cfg.dim;
    std::vector<std::string> texts = loc.texts();
    const std::size_t n = texts.size();
    for (auto& t : context_tokens(comment)) texts.push_back(std::move(t));

    EmbeddedInput out;
    out.n_code = n;
    out.rows.resize(static_cast<Eigen::Index>(texts.size()), d);

    switch (cfg.provider) {
        case EmbeddingProvider::Hashed:
            for (std::size_t i = 0; i < texts.size(); ++i)
                out.rows.row(static_cast<Eigen::Index>(i)) = vocab_->vector(texts[i]).transpose();
            break;
        case EmbeddingProvider::TrainableTable: {
            const auto buckets = static_cast<std::size_t>(params_.table.rows());
            for (std::size_t i = 0; i < texts.size(); ++i) {
                const auto b = vocab_->bucket(texts[i], buckets);
                out.buckets.push_back(b);
                out.rows.row(static_cast<Eigen::Index>(i)) = params_.table.row(static_cast<Eigen::Index>(b));
            }
            break;
        }
        case EmbeddingProvider::Remote: {
            if (cfg.endpoint.empty()) fail(ErrorKind::Config, "embedding.endpoint is required for the remote provider");
            const auto reply = post_json(cfg.endpoint, "/v1/embed", {{"tokens", texts}}, cfg.retry);
            try {
                const auto dim = reply.at("dim").get<int>();
                const auto& vectors = reply.at("vectors");
                const auto& cls = reply.at("cls");
                if (dim != d || vectors.size() != texts.size() || static_cast<int>(cls.size()) != d)
                    fail(ErrorKind::MalformedResponse, "embedding response shape mismatch");
                for (std::size_t i = 0; i < texts.size(); ++i) {
                    const auto& row = vectors[i];
                    if (static_cast<int>(row.size()) != d)
                        fail(ErrorKind::MalformedResponse, "embedding row has wrong dimension");
                    for (int k = 0; k < d; ++k)
                        out.rows(static_cast<Eigen::Index>(i), k) = row[static_cast<std::size_t>(k)].get<double>();
                }
                out.cls = vector_from_json(cls);
            } catch (const nlohmann::json::exception& e) {
                fail(ErrorKind::MalformedResponse, std::string("embedding response: ") + e.what());
            }
            break;
        }
    }

    if (cfg.positional == PositionalEncoding::Sinusoidal) {
        const double scale = cfg.positional_scale > 0.0 ? cfg.positional_scale
                                                        : std::sqrt(2.0 / static_cast<double>(d));
        // Position 0 belongs to the class token.
        for (std::size_t i = 0; i < texts.size(); ++i)
            out.rows.row(static_cast<Eigen::Index>(i)) += positional_vector(i + 1, d, scale).transpose();
    }
    return out;
}

Eigen::VectorXd Localizer::start_logits(const EmbeddedInput& e) const {
    const auto E = e.rows.topRows(static_cast<Eigen::Index>(e.n_code));
    Eigen::VectorXd q0 = query_cls(e);
    const auto m = static_cast<Eigen::Index>(e.n_context());
    if (m > 0) q0 += e.rows.bottomRows(m).colwise().mean().transpose();
    const Eigen::VectorXd u = params_.wk_pre.transpose() * (params_.wq_pre * q0);
    return logit_scale(params_) * (E * u);
}

Eigen::VectorXd Localizer::end_logits(const EmbeddedInput& e, std::size_t query_index) const {
    const auto E = e.rows.topRows(static_cast<Eigen::Index>(e.n_code));
    const Eigen::VectorXd q = E.row(static_cast<Eigen::Index>(query_index)).transpose();
    const Eigen::VectorXd u = params_.wk_suf.transpose() * (params_.wq_suf * q);
    return logit_scale(params_) * (E * u);
}

PointerPrediction Localizer::predict_start(const EmbeddedInput& e, const ContextMask* mask) const {
    if (e.n_code == 0) fail(ErrorKind::Precondition, "no code tokens to point at");
    PointerPrediction out;
    out.probs = masked_softmax(start_logits(e), allowed_from(mask, e.n_code));
    out.index = argmax_first(out.probs);
    return out;
}

PointerPrediction Localizer::predict_end(const EmbeddedInput& e, std::size_t query_index,
                                         const ContextMask* mask) const {
    if (query_index >= e.n_code)
        fail(ErrorKind::InvalidArgument, "end query index " + std::to_string(query_index) +
                                             " out of range");
    auto allowed = allowed_from(mask, e.n_code);
    if (params_.structural_end_mask) apply_structural(allowed, query_index);
    PointerPrediction out;
    out.probs = masked_softmax(end_logits(e, query_index), allowed);
    out.index = argmax_first(out.probs);
    return out;
}

LocalizationResult Localizer::localize(const TokenizedFunction& loc,
                                       const LocalizationContext& context) const {
    if (loc.tokenizer() != TokenizerId::Loc)
        fail(ErrorKind::TokenizerMismatch, "the localizer expects the LOC token view");
    const auto e = embed(loc, context.comment);
    std::optional<ContextMask> mask;
    if (context.buggy_lines) mask = mask_from_lines(loc, *context.buggy_lines);
    const ContextMask* m = mask ? &*mask : nullptr;

    auto start = predict_start(e, m);
    auto end = predict_end(e, start.index, m);
    LocalizationResult r;
    r.region = BugRegion{static_cast<std::ptrdiff_t>(start.index),
                         static_cast<std::ptrdiff_t>(end.index), TokenizerId::Loc};
    r.start_probs = std::move(start.probs);
    r.end_probs = std::move(end.probs);
    return r;
}

RegionPrediction predict_regions(const Localizer& localizer, const BugFixSample& sample,
                                 bool use_line_mask, bool use_comment) {
    const auto loc = tokenize(sample.buggy, TokenizerId::Loc);
    const auto fix = tokenize(sample.buggy, TokenizerId::Fix);
    LocalizationContext ctx;
    if (use_line_mask) ctx.buggy_lines = sample.buggy_lines;
    if (use_comment) ctx.comment = sample.comment;
    RegionPrediction out;
    out.loc = localizer.localize(loc, ctx).region;
    out.fix = translate_region(loc, fix, out.loc);
    return out;
}

std::vector<LocalizationExample> make_localization_examples(const std::vector<BugFixSample>& samples,
                                                            bool expand_empty,
                                                            std::size_t* dropped) {
    std::vector<LocalizationExample> out;
    std::size_t skipped = 0;
    for (const auto& s : samples) {
        auto b = tokenize(s.buggy, TokenizerId::Loc);
        auto f = tokenize(s.fixed, TokenizerId::Loc);
        try {
            auto d = extract_region(b, f, expand_empty);
            if (b.empty()) {
                ++skipped;
                continue;
            }
            out.push_back(LocalizationExample{s.id, std::move(b), d.region(), s.comment, s.buggy_lines});
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::DegeneratePair) throw;
            ++skipped;
            log_warn("skipping '" + s.id + "': no token-level edit");
        }
    }
    if (dropped) *dropped = skipped;
    return out;
}

nlohmann::json to_json(const LocalizerTrainConfig& c) {
    return {{"attention_dim", c.attention_dim}, {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate}, {"epochs", c.epochs},
            {"patience", c.patience},           {"use_line_mask", c.use_line_mask},
            {"use_comment", c.use_comment},     {"scaled", c.scaled},
            {"structural_end_mask", c.structural_end_mask}, {"seed", c.seed}};
}

LocalizerTrainConfig localizer_train_config_from_json(const nlohmann::json& j) {
    LocalizerTrainConfig c;
    try {
        if (j.contains("attention_dim")) c.attention_dim = j.at("attention_dim").get<int>();
        if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
        if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
        if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
        if (j.contains("patience")) c.patience = j.at("patience").get<int>();
        if (j.contains("use_line_mask")) c.use_line_mask = j.at("use_line_mask").get<bool>();
        if (j.contains("use_comment")) c.use_comment = j.at("use_comment").get<bool>();
        if (j.contains("scaled")) c.scaled = j.at("scaled").get<bool>();
        if (j.contains("structural_end_mask")) c.structural_end_mask = j.at("structural_end_mask").get<bool>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("localizer: ") + e.what());
    }
    if (c.batch_size <= 0) fail(ErrorKind::Config, "localizer.batch_size must be positive");
    if (c.epochs < 0) fail(ErrorKind::Config, "localizer.epochs must be non-negative");
    if (!(c.learning_rate > 0.0)) fail(ErrorKind::Config, "localizer.learning_rate must be positive");
    return c;
}

namespace {

struct Prepared {
    EmbeddedInput input;
    std::optional<ContextMask> mask;
    std::size_t start = 0;
    std::ptrdiff_t end = 0;
};

Prepared prepare(const Localizer& loc, const LocalizationExample& ex, bool use_lines, bool use_comment) {
    Prepared p;
    p.input = loc.embed(ex.buggy, use_comment ? ex.comment : std::nullopt);
    p.start = static_cast<std::size_t>(ex.truth.start);
    p.end = ex.truth.end;
    if (use_lines && ex.buggy_lines) {
        auto mask = mask_from_lines(ex.buggy, *ex.buggy_lines);
        const bool covers_start = std::binary_search(mask.allowed.begin(), mask.allowed.end(), p.start);
        const bool covers_end = p.end < 0 || std::binary_search(mask.allowed.begin(), mask.allowed.end(),
                                                                static_cast<std::size_t>(p.end));
        if (covers_start && covers_end) p.mask = std::move(mask);
    }
    return p;
}

struct ValScore {
    double start = 0.0;
    double both = 0.0;
};

ValScore validation_score(const Localizer& loc, const std::vector<Prepared>& data) {
    if (data.empty()) return {};
    std::size_t start_hits = 0, both_hits = 0;
    for (const auto& d : data) {
        const ContextMask* mask = d.mask ? &*d.mask : nullptr;
        const auto pred = loc.predict_start(d.input, mask);
        if (pred.index != d.start) continue;
        ++start_hits;
        const auto end = loc.predict_end(d.input, pred.index, mask);
        if (static_cast<std::ptrdiff_t>(end.index) == d.end) ++both_hits;
    }
    const double n = static_cast<double>(data.size());
    return {static_cast<double>(start_hits) / n, static_cast<double>(both_hits) / n};
}

}  // namespace

LocalizerParams train_localizer(const std::vector<LocalizationExample>& train,
                                const std::vector<LocalizationExample>& validation,
                                const LocalizerTrainConfig& cfg, const EmbeddingConfig& embedding,
                                TrainHistory* history) {
    if (train.empty()) fail(ErrorKind::Precondition, "training set is empty");

    LocalizerParams params = LocalizerParams::initial(embedding, cfg.attention_dim, cfg.seed);
    params.scaled = cfg.scaled;
    params.structural_end_mask = cfg.structural_end_mask;
    TrainHistory hist;
    if (cfg.epochs == 0) {
        if (history) *history = hist;
        return params;
    }

    const bool trainable_table = embedding.provider == EmbeddingProvider::TrainableTable;
    const bool remote = embedding.provider == EmbeddingProvider::Remote;

    // Embeddings are fixed for hashed and remote providers, so they are
    // computed once. With a trainable table the rows are rebuilt per step.
    auto build = [&](const std::vector<LocalizationExample>& set) {
        Localizer loc(params);
        std::vector<Prepared> out;
        out.reserve(set.size());
        for (const auto& ex : set) out.push_back(prepare(loc, ex, cfg.use_line_mask, cfg.use_comment));
        return out;
    };
    std::vector<Prepared> train_data = build(train);
    std::vector<Prepared> val_data = build(validation);

    // Positional part of each row, needed to rebuild rows from the table.
    auto positional_part = [&](const Prepared& p) {
        Eigen::MatrixXd rows = p.input.rows;
        for (Eigen::Index i = 0; i < rows.rows(); ++i)
            rows.row(i) -= params.table.row(static_cast<Eigen::Index>(p.input.buckets[static_cast<std::size_t>(i)]));
        return rows;
    };
    std::vector<Eigen::MatrixXd> train_pos;
    if (trainable_table)
        for (const auto& p : train_data) train_pos.push_back(positional_part(p));

    AdamSlot s_wq_pre, s_wk_pre, s_wq_suf, s_wk_suf, s_cls;
    std::unordered_map<std::size_t, AdamSlot> s_table;
    std::unordered_map<std::size_t, int> table_steps;

    std::vector<std::size_t> order(train_data.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix64(cfg.seed ^ 0x747261696eULL));

    LocalizerParams best = params;
    ValScore best_score = val_data.empty() ? ValScore{-1.0, -1.0} : validation_score(Localizer(params), val_data);
    double patience_ref = best_score.start;
    hist.best_val_start_accuracy = std::max(0.0, best_score.start);
    int since_best = 0;
    int step = 0;
    LocalizerGrads g;
    const auto batch = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(uniform_below(rng, i))]);

        double epoch_loss = 0.0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += batch) {
            const std::size_t b1 = std::min(order.size(), b0 + batch);
            const double inv = 1.0 / static_cast<double>(b1 - b0);
            LocalizerGrads acc;
            acc.zero_like(params, 0);
            std::unordered_map<std::size_t, Eigen::VectorXd> table_grad;
            double batch_loss = 0.0;

            for (std::size_t k = b0; k < b1; ++k) {
                const std::size_t idx = order[k];
                auto& item = train_data[idx];
                if (trainable_table) {
                    auto& rows = item.input.rows;
                    rows = train_pos[idx];
                    for (Eigen::Index r = 0; r < rows.rows(); ++r)
                        rows.row(r) += params.table.row(static_cast<Eigen::Index>(item.input.buckets[static_cast<std::size_t>(r)]));
                }
                const Eigen::VectorXd& cls = (remote && item.input.cls) ? *item.input.cls : params.cls;
                batch_loss += localizer_loss(params, item.input.rows, item.input.n_code, cls, item.start,
                                             item.end, item.mask ? &*item.mask : nullptr, &g);
                acc.wq_pre += g.wq_pre;
                acc.wk_pre += g.wk_pre;
                acc.wq_suf += g.wq_suf;
                acc.wk_suf += g.wk_suf;
                acc.cls += g.cls;
                if (trainable_table) {
                    for (Eigen::Index r = 0; r < g.rows.rows(); ++r) {
                        const auto bucket = item.input.buckets[static_cast<std::size_t>(r)];
                        auto [it, fresh] = table_grad.try_emplace(bucket, Eigen::VectorXd::Zero(params.embedding.dim));
                        it->second += g.rows.row(r).transpose();
                    }
                }
            }

            if (!std::isfinite(batch_loss)) {
                if (history) *history = hist;
                throw DivergenceError("localizer loss became non-finite at epoch " + std::to_string(epoch),
                                      to_checkpoint(params.all_finite() ? params : best));
            }
            epoch_loss += batch_loss;
            ++step;
            adam_step(params.wq_pre, acc.wq_pre * inv, s_wq_pre, step, cfg.learning_rate);
            adam_step(params.wk_pre, acc.wk_pre * inv, s_wk_pre, step, cfg.learning_rate);
            adam_step(params.wq_suf, acc.wq_suf * inv, s_wq_suf, step, cfg.learning_rate);
            adam_step(params.wk_suf, acc.wk_suf * inv, s_wk_suf, step, cfg.learning_rate);
            if (!remote) adam_step(params.cls, acc.cls * inv, s_cls, step, cfg.learning_rate);
            if (trainable_table) {
                // Lazy Adam: only rows touched in this batch move.
                std::vector<std::size_t> touched;
                for (const auto& [bucket, grad] : table_grad) touched.push_back(bucket);
                std::sort(touched.begin(), touched.end());
                for (auto bucket : touched) {
                    auto row = params.table.row(static_cast<Eigen::Index>(bucket));
                    Eigen::MatrixXd row_m = row;
                    adam_step(row_m, (table_grad[bucket] * inv).transpose().eval(), s_table[bucket],
                              ++table_steps[bucket], cfg.learning_rate);
                    row = row_m;
                }
            }
        }

        hist.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));
        if (trainable_table) {
            // Refresh validation rows from the updated table.
            val_data = build(validation);
        }
        const Localizer current(params);
        const ValScore score = val_data.empty() ? ValScore{} : validation_score(current, val_data);
        const double acc = score.start;
        hist.val_start_accuracy.push_back(acc);
        log_info("localizer epoch " + std::to_string(epoch) + ": loss " +
                 std::to_string(hist.train_loss.back()) + ", val start acc " + std::to_string(acc));
        // Equal start accuracy falls back to both-token accuracy.
        if (val_data.empty() || acc > best_score.start ||
            (acc == best_score.start && score.both > best_score.both)) {
            best_score = score;
            best = params;
            hist.best_epoch = epoch;
            hist.best_val_start_accuracy = acc;
        }
        if (val_data.empty() || acc > patience_ref) {
            patience_ref = acc;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    if (history) *history = hist;
    return best;
}

std::vector<LocalizationResult> predict_all(const Localizer& localizer,
                                            const std::vector<LocalizationExample>& examples,
                                            bool use_line_mask, bool use_comment) {
    std::vector<LocalizationResult> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) {
        LocalizationContext ctx;
        if (use_line_mask) ctx.buggy_lines = ex.buggy_lines;
        if (use_comment) ctx.comment = ex.comment;
        out.push_back(localizer.localize(ex.buggy, ctx));
    }
    return out;
}

nlohmann::json prediction_record(const std::string& id, const LocalizationResult& r) {
    auto top = [](const Eigen::VectorXd& probs) {
        std::vector<std::size_t> idx(static_cast<std::size_t>(probs.size()));
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return probs[static_cast<Eigen::Index>(a)] > probs[static_cast<Eigen::Index>(b)];
        });
        auto out = nlohmann::json::array();
        for (std::size_t k = 0; k < std::min<std::size_t>(5, idx.size()); ++k)
            out.push_back({{"index", idx[k]}, {"prob", probs[static_cast<Eigen::Index>(idx[k])]}});
        return out;
    };
    return {{"id", id},
            {"start", r.region.start},
            {"end", r.region.end},
            {"top_start", top(r.start_probs)},
            {"top_end", top(r.end_probs)}};
}

}  // namespace tokfix
