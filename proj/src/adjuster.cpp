#include "tokfix/adjuster.hpp"

#include "tokfix/adam.hpp"
#include "tokfix/error.hpp"
#include "tokfix/eval.hpp"
#include "tokfix/log.hpp"
#include "tokfix/matrix_json.hpp"
#include "tokfix/util.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace tokfix {

namespace {

constexpr const char* kCheckpointFormat = "tokfix-adjuster";
constexpr int kCheckpointVersion = 1;

EmbeddingConfig feature_embedding(const EmbeddingConfig& c) {
    EmbeddingConfig out = c;
    out.positional = PositionalEncoding::None;
    if (out.provider == EmbeddingProvider::TrainableTable) out.provider = EmbeddingProvider::Hashed;
    return out;
}

}  // namespace

std::optional<int> label_from_viable(const std::vector<int>& viable) {
    for (int mag = 0; mag <= kMaxShift; ++mag) {
        for (int s : {-mag, mag}) {
            if (std::find(viable.begin(), viable.end(), s) != viable.end()) return s;
        }
    }
    return std::nullopt;
}

nlohmann::json to_json(const AdjustmentExample& e) {
    return {{"sample_id", e.sample_id},
            {"predicted_start", e.predicted_start},
            {"viable_shifts", e.viable_shifts},
            {"label", e.viable_shifts.empty() ? nlohmann::json(nullptr) : nlohmann::json(e.label)}};
}

AdjustmentExample adjustment_example_from_json(const nlohmann::json& j) {
    AdjustmentExample e;
    try {
        e.sample_id = j.at("sample_id").get<std::string>();
        e.predicted_start = j.at("predicted_start").get<std::size_t>();
        e.viable_shifts = j.at("viable_shifts").get<std::vector<int>>();
        if (!j.at("label").is_null()) e.label = j.at("label").get<int>();
    } catch (const nlohmann::json::exception& ex) {
        fail(ErrorKind::Schema, std::string("adjustment record: ") + ex.what());
    }
    for (int s : e.viable_shifts)
        if (s < -kMaxShift || s > kMaxShift) fail(ErrorKind::Schema, "adjustment record: shift out of range");
    if (!e.viable_shifts.empty() &&
        std::find(e.viable_shifts.begin(), e.viable_shifts.end(), e.label) == e.viable_shifts.end())
        fail(ErrorKind::Schema, "adjustment record: label is not a viable shift");
    return e;
}

void write_adjustment_dataset(const std::string& path, const std::vector<AdjustmentExample>& examples) {
    std::string out;
    for (const auto& e : examples) out += to_json(e).dump() + "\n";
    write_file(path, out);
}

std::vector<AdjustmentExample> load_adjustment_dataset(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<AdjustmentExample> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(adjustment_example_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::parse_error& e) {
            fail(ErrorKind::Schema, path + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const Error& e) {
            fail(ErrorKind::Schema, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

FeatureEncoder::FeatureEncoder(const EmbeddingConfig& embedding, bool single_embedding)
    : config_(feature_embedding(embedding)),
      single_(single_embedding),
      embedder_(std::make_shared<Localizer>(LocalizerParams::initial(config_, 1, 0))) {}

Eigen::MatrixXd FeatureEncoder::token_rows(const TokenizedFunction& fix) const {
    return embedder_->embed(fix).rows;
}

int FeatureEncoder::feature_dim() const { return single_ ? config_.dim : kShiftClasses * config_.dim; }

Eigen::VectorXd FeatureEncoder::window(const Eigen::MatrixXd& rows, std::size_t center) const {
    const auto d = static_cast<Eigen::Index>(config_.dim);
    if (single_) return rows.row(static_cast<Eigen::Index>(center)).transpose();
    Eigen::VectorXd f = Eigen::VectorXd::Zero(kShiftClasses * d);
    for (int k = -kMaxShift; k <= kMaxShift; ++k) {
        const auto i = static_cast<std::ptrdiff_t>(center) + k;
        if (i < 0 || i >= rows.rows()) continue;
        f.segment((k + kMaxShift) * d, d) = rows.row(i).transpose();
    }
    return f;
}

Eigen::VectorXd FeatureEncoder::feature(const TokenizedFunction& fix, std::size_t center) const {
    return window(token_rows(fix), center);
}

bool AdjusterParams::all_finite() const { return weights.allFinite() && bias.allFinite(); }

bool AdjusterParams::operator==(const AdjusterParams& o) const {
    return embedding == o.embedding && single_embedding == o.single_embedding && weights == o.weights &&
           bias == o.bias;
}

nlohmann::json to_checkpoint(const AdjusterParams& p) {
    return {{"format", kCheckpointFormat},
            {"version", kCheckpointVersion},
            {"embedding", to_json(p.embedding)},
            {"single_embedding", p.single_embedding},
            {"classes", kShiftClasses},
            {"feature_dim", p.weights.cols()},
            {"weights", {{"w", matrix_json(p.weights)}, {"b", vector_json(p.bias)}}}};
}

AdjusterParams adjuster_from_checkpoint(const nlohmann::json& j) {
    try {
        if (j.at("format") != kCheckpointFormat) fail(ErrorKind::Schema, "not an adjuster checkpoint");
        if (j.at("version").get<int>() != kCheckpointVersion)
            fail(ErrorKind::Schema, "unsupported adjuster checkpoint version");
        AdjusterParams p;
        p.embedding = embedding_config_from_json(j.at("embedding"));
        p.single_embedding = j.at("single_embedding").get<bool>();
        p.weights = matrix_from_json(j.at("weights").at("w"), "w");
        p.bias = vector_from_json(j.at("weights").at("b"));
        const auto expected = (p.single_embedding ? 1 : kShiftClasses) * p.embedding.dim;
        if (p.weights.rows() != kShiftClasses || p.weights.cols() != expected || p.bias.size() != kShiftClasses)
            fail(ErrorKind::Schema, "adjuster checkpoint: weight shape does not match dims");
        return p;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Schema, std::string("malformed adjuster checkpoint: ") + e.what());
    }
}

void save_adjuster(const std::string& path, const AdjusterParams& params) {
    write_file(path, to_checkpoint(params).dump() + "\n");
}

AdjusterParams load_adjuster(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::Schema, path + ": " + e.what());
    }
    return adjuster_from_checkpoint(j);
}

BugRegion shift_region(const BugRegion& region, std::size_t new_start) {
    BugRegion out = region;
    out.start = static_cast<std::ptrdiff_t>(new_start);
    out.end = std::max(region.end, out.start - 1);
    return out;
}

std::vector<AdjustmentExample> collect_adjustment_data(const std::vector<BugFixSample>& samples,
                                                       const Localizer& localizer,
                                                       const CompletionBackend& backend,
                                                       const CollectConfig& config,
                                                       std::size_t* dropped) {
    if (config.probes < 1) fail(ErrorKind::Config, "adjuster.probes must be at least 1");
    const FeatureEncoder encoder(localizer.params().embedding, config.single_embedding);
    std::vector<AdjustmentExample> out(samples.size());

    parallel_for(samples.size(), config.max_in_flight, [&](std::size_t idx) {
        const auto& sample = samples[idx];
        const auto fix = tokenize(sample.buggy, TokenizerId::Fix);
        AdjustmentExample ex;
        ex.sample_id = sample.id;
        if (fix.empty()) {
            out[idx] = std::move(ex);
            return;
        }
        const auto pred = predict_regions(localizer, sample, config.use_line_mask, config.use_comment);
        ex.predicted_start = static_cast<std::size_t>(pred.fix.start);
        const auto last = static_cast<std::ptrdiff_t>(fix.size()) - 1;
        std::vector<std::ptrdiff_t> tried;
        for (int shift = -kMaxShift; shift <= kMaxShift; ++shift) {
            const auto start = std::clamp<std::ptrdiff_t>(pred.fix.start + shift, 0, last);
            try {
                const auto region = shift_region(pred.fix, static_cast<std::size_t>(start));
                const auto decomp = decompose_at(fix, region);
                const auto prompt = build_prompt(config.style, fix, decomp);
                GenerationRequest req;
                req.prompt_text = prompt.text;
                req.n = config.probes;
                req.max_new_tokens = config.max_new_tokens;
                req.temperature = config.temperature;
                req.stop = prompt.stop_markers;
                req.seed = config.seed;
                for (const auto& c : generate(backend, req)) {
                    if (exact_match(completion_to_fix(prompt, c.text), sample.fixed)) {
                        ex.viable_shifts.push_back(shift);
                        break;
                    }
                }
            } catch (const Error& e) {
                log_warn(sample.id + ": shift " + std::to_string(shift) + " not viable: " + e.what());
            }
        }
        if (auto label = label_from_viable(ex.viable_shifts)) ex.label = *label;
        ex.feature = encoder.feature(fix, ex.predicted_start);
        out[idx] = std::move(ex);
    });

    std::size_t none = 0;
    for (const auto& e : out) none += e.viable_shifts.empty();
    if (dropped) *dropped = none;
    if (none > 0) log_info(std::to_string(none) + " samples have no viable shift");
    return out;
}

void attach_features(std::vector<AdjustmentExample>& examples, const std::vector<BugFixSample>& samples,
                     const FeatureEncoder& encoder) {
    std::map<std::string, const BugFixSample*> by_id;
    for (const auto& s : samples) by_id[s.id] = &s;
    for (auto& e : examples) {
        const auto it = by_id.find(e.sample_id);
        if (it == by_id.end()) fail(ErrorKind::InvalidArgument, "adjustment example for unknown sample " + e.sample_id);
        const auto fix = tokenize(it->second->buggy, TokenizerId::Fix);
        if (e.predicted_start >= fix.size())
            fail(ErrorKind::InvalidArgument, "adjustment example " + e.sample_id + ": predicted start out of range");
        e.feature = encoder.feature(fix, e.predicted_start);
    }
}

nlohmann::json to_json(const AdjusterTrainConfig& c) {
    return {{"epochs", c.epochs},       {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate}, {"patience", c.patience},
            {"holdout_fraction", c.holdout_fraction}, {"seed", c.seed}};
}

AdjusterTrainConfig adjuster_train_config_from_json(const nlohmann::json& j) {
    AdjusterTrainConfig c;
    try {
        if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
        if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
        if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
        if (j.contains("patience")) c.patience = j.at("patience").get<int>();
        if (j.contains("holdout_fraction")) c.holdout_fraction = j.at("holdout_fraction").get<double>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("adjuster: ") + e.what());
    }
    if (c.epochs < 0) fail(ErrorKind::Config, "adjuster.epochs must be non-negative");
    if (c.batch_size < 1) fail(ErrorKind::Config, "adjuster.batch_size must be positive");
    if (!(c.holdout_fraction > 0.0 && c.holdout_fraction < 1.0))
        fail(ErrorKind::Config, "adjuster.holdout_fraction must lie in (0, 1)");
    return c;
}

namespace {

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
    const Eigen::VectorXd e = (z.array() - z.maxCoeff()).exp();
    return e / e.sum();
}

struct Scored {
    double accuracy = 0.0;
    double loss = 0.0;
};

Scored score(const AdjusterParams& p, const std::vector<const AdjustmentExample*>& data) {
    Scored s;
    if (data.empty()) return s;
    std::size_t hits = 0;
    for (const auto* e : data) {
        const Eigen::VectorXd z = p.weights * e->feature + p.bias;
        const Eigen::VectorXd a = softmax(z);
        hits += static_cast<int>(argmax_first(z)) - kMaxShift == e->label;
        s.loss -= std::log(a[e->label + kMaxShift]);
    }
    s.accuracy = static_cast<double>(hits) / static_cast<double>(data.size());
    s.loss /= static_cast<double>(data.size());
    return s;
}

}  // namespace

AdjusterParams train_adjuster(const std::vector<AdjustmentExample>& examples,
                              const EmbeddingConfig& embedding, const AdjusterTrainConfig& cfg,
                              bool single_embedding, AdjusterHistory* history) {
    std::vector<const AdjustmentExample*> labeled;
    for (const auto& e : examples)
        if (!e.viable_shifts.empty()) labeled.push_back(&e);
    if (labeled.size() < 50)
        fail(ErrorKind::Precondition, "adjuster training needs at least 50 labeled examples, got " +
                                          std::to_string(labeled.size()));
    const int dim = FeatureEncoder(embedding, single_embedding).feature_dim();
    for (const auto* e : labeled)
        if (e->feature.size() != dim) fail(ErrorKind::InvalidArgument, "adjustment example feature has wrong size");

    std::mt19937_64 rng(mix64(cfg.seed ^ 0x61646a757374ULL));
    std::vector<std::size_t> order(labeled.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<std::size_t>(uniform_below(rng, i))]);
    const auto n_hold = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(cfg.holdout_fraction * static_cast<double>(labeled.size()))));
    std::vector<const AdjustmentExample*> hold, train;
    for (std::size_t i = 0; i < order.size(); ++i) (i < n_hold ? hold : train).push_back(labeled[order[i]]);

    AdjusterParams p;
    p.embedding = embedding;
    p.single_embedding = single_embedding;
    p.weights = Eigen::MatrixXd::Zero(kShiftClasses, dim);
    // Bias starts at the smoothed log prior of the training labels.
    Eigen::VectorXd counts = Eigen::VectorXd::Ones(kShiftClasses);
    for (const auto* e : train) counts[e->label + kMaxShift] += 1.0;
    p.bias = (counts / counts.sum()).array().log();

    AdjusterParams best = p;
    Scored best_score = score(p, hold);
    int best_epoch = 0;
    int since_best = 0;
    AdamSlot sw, sb;
    int step = 0;
    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), 0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[static_cast<std::size_t>(uniform_below(rng, i))]);
        for (std::size_t b0 = 0; b0 < idx.size(); b0 += batch) {
            const std::size_t b1 = std::min(idx.size(), b0 + batch);
            Eigen::MatrixXd gw = Eigen::MatrixXd::Zero(kShiftClasses, dim);
            Eigen::VectorXd gb = Eigen::VectorXd::Zero(kShiftClasses);
            double loss = 0.0;
            for (std::size_t k = b0; k < b1; ++k) {
                const auto* e = train[idx[k]];
                Eigen::VectorXd g = softmax(p.weights * e->feature + p.bias);
                loss -= std::log(g[e->label + kMaxShift]);
                g[e->label + kMaxShift] -= 1.0;
                gw += g * e->feature.transpose();
                gb += g;
            }
            if (!std::isfinite(loss))
                throw DivergenceError("adjuster loss became non-finite at epoch " + std::to_string(epoch),
                                      to_checkpoint(p.all_finite() ? p : best));
            const double inv = 1.0 / static_cast<double>(b1 - b0);
            ++step;
            adam_step(p.weights, gw * inv, sw, step, cfg.learning_rate);
            adam_step(p.bias, gb * inv, sb, step, cfg.learning_rate);
        }
        const Scored s = score(p, hold);
        if (s.accuracy > best_score.accuracy ||
            (s.accuracy == best_score.accuracy && s.loss < best_score.loss)) {
            if (s.accuracy > best_score.accuracy) since_best = 0;
            best_score = s;
            best = p;
            best_epoch = epoch;
        }
        if (best_epoch != epoch && ++since_best >= cfg.patience) break;
    }

    if (history) {
        history->trained_on = train.size();
        history->held_out = hold.size();
        history->dropped = examples.size() - labeled.size();
        history->train_accuracy = score(best, train).accuracy;
        history->holdout_accuracy = best_score.accuracy;
        history->best_epoch = best_epoch;
    }
    return best;
}

Adjuster::Adjuster(AdjusterParams params)
    : params_(std::move(params)), encoder_(params_.embedding, params_.single_embedding) {
    if (params_.weights.rows() != kShiftClasses || params_.weights.cols() != encoder_.feature_dim())
        fail(ErrorKind::InvalidArgument, "adjuster weights do not match the feature size");
}

Eigen::VectorXd Adjuster::class_scores(const Eigen::VectorXd& feature) const {
    return params_.weights * feature + params_.bias;
}

int Adjuster::shift_for(const Eigen::VectorXd& feature) const {
    return static_cast<int>(argmax_first(class_scores(feature))) - kMaxShift;
}

std::size_t Adjuster::adjust(const TokenizedFunction& fix, std::size_t predicted_start) const {
    if (fix.empty()) return 0;
    const auto shift = shift_for(encoder_.feature(fix, predicted_start));
    const auto last = static_cast<std::ptrdiff_t>(fix.size()) - 1;
    return static_cast<std::size_t>(
        std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(predicted_start) + shift, 0, last));
}

}  // namespace tokfix
