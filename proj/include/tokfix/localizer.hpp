#pragma once

#include "tokfix/corpus.hpp"
#include "tokfix/embedding.hpp"
#include "tokfix/error.hpp"
#include "tokfix/region.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace tokfix {

/// Trainable weights of the two pointer heads. Each head scores code token i
/// as (Wq * query) . (Wk * e_i); the start head queries with the class
/// vector plus the mean of the context (comment) rows, the end head with the
/// embedding of the start token.
struct LocalizerParams {
    EmbeddingConfig embedding;
    int attention_dim = 128;
    /// Divide logits by sqrt(attention_dim).
    bool scaled = false;
    /// Restrict end candidates to i >= start - 1.
    bool structural_end_mask = true;

    Eigen::MatrixXd wq_pre, wk_pre, wq_suf, wk_suf;  // attention_dim x dim
    Eigen::VectorXd cls;                             // dim
    Eigen::MatrixXd table;                           // buckets x dim (TrainableTable)

    static LocalizerParams initial(const EmbeddingConfig& embedding, int attention_dim,
                                   std::uint64_t seed);
    bool all_finite() const;
    bool operator==(const LocalizerParams& o) const;
};

nlohmann::json to_checkpoint(const LocalizerParams& params);
LocalizerParams localizer_from_checkpoint(const nlohmann::json& j);
void save_localizer(const std::string& path, const LocalizerParams& params);
LocalizerParams load_localizer(const std::string& path);

/// Allowed code-token indices (0-based, sorted, unique).
struct ContextMask {
    std::vector<std::size_t> allowed;
};

/// Tokens lying on any of the given 1-based lines.
ContextMask mask_from_lines(const TokenizedFunction& loc, const std::vector<int>& lines);

struct PointerPrediction {
    std::size_t index = 0;
    Eigen::VectorXd probs;
};

struct LocalizationContext {
    std::optional<std::vector<int>> buggy_lines;
    std::optional<std::string> comment;
};

struct LocalizationResult {
    BugRegion region;  // LOC indices
    Eigen::VectorXd start_probs;
    Eigen::VectorXd end_probs;
};

/// Masked softmax; disallowed entries get exactly zero. Throws mask-empty
/// when nothing is allowed.
Eigen::VectorXd masked_softmax(const Eigen::VectorXd& logits, const std::vector<char>& allowed);

/// Index of the largest entry, smallest index on ties.
std::size_t argmax_first(const Eigen::VectorXd& v);

/// Gradients of the summed two-head cross-entropy.
struct LocalizerGrads {
    Eigen::MatrixXd wq_pre, wk_pre, wq_suf, wk_suf;
    Eigen::VectorXd cls;
    Eigen::MatrixXd rows;  // d loss / d embedding rows

    void zero_like(const LocalizerParams& p, Eigen::Index n_rows);
};

/// Teacher-forced loss: -log a_pre[gt_start] - log a_suf[gt_end], where the
/// end head queries with e_{gt_start}. `cls` overrides params.cls (remote
/// encoders provide their own). Fills `grads` when non-null.
double localizer_loss(const LocalizerParams& params, const Eigen::MatrixXd& rows,
                      std::size_t n_code, const Eigen::VectorXd& cls, std::size_t gt_start,
                      std::ptrdiff_t gt_end, const ContextMask* mask, LocalizerGrads* grads);

class Localizer {
public:
    explicit Localizer(LocalizerParams params);

    const LocalizerParams& params() const noexcept { return params_; }

    /// Embeds code tokens (rows [0, n)) and comment tokens (rows [n, n+m)).
    EmbeddedInput embed(const TokenizedFunction& loc,
                        const std::optional<std::string>& comment = std::nullopt) const;

    const Eigen::VectorXd& query_cls(const EmbeddedInput& e) const;

    PointerPrediction predict_start(const EmbeddedInput& e, const ContextMask* mask = nullptr) const;
    PointerPrediction predict_end(const EmbeddedInput& e, std::size_t query_index,
                                  const ContextMask* mask = nullptr) const;

    /// Free-running inference: the end head queries with the predicted start.
    LocalizationResult localize(const TokenizedFunction& loc,
                                const LocalizationContext& context = {}) const;

    Eigen::VectorXd start_logits(const EmbeddedInput& e) const;
    Eigen::VectorXd end_logits(const EmbeddedInput& e, std::size_t query_index) const;

private:
    LocalizerParams params_;
    std::shared_ptr<HashedVocabulary> vocab_;
};

/// A localizer prediction on a sample, in LOC indices and translated onto
/// the FIX view of the buggy function.
struct RegionPrediction {
    BugRegion loc;
    BugRegion fix;
};

RegionPrediction predict_regions(const Localizer& localizer, const BugFixSample& sample,
                                 bool use_line_mask, bool use_comment);

struct LocalizationExample {
    std::string id;
    TokenizedFunction buggy;  // LOC view
    BugRegion truth;          // LOC indices
    std::optional<std::string> comment;
    std::optional<std::vector<int>> buggy_lines;
};

/// Labels samples with LOC ground-truth regions. Degenerate pairs are skipped
/// and counted in `dropped`.
std::vector<LocalizationExample> make_localization_examples(const std::vector<BugFixSample>& samples,
                                                            bool expand_empty = true,
                                                            std::size_t* dropped = nullptr);

struct LocalizerTrainConfig {
    int attention_dim = 128;
    int batch_size = 32;
    double learning_rate = 1e-3;
    int epochs = 30;
    int patience = 5;
    bool use_line_mask = false;
    bool use_comment = false;
    bool scaled = false;
    bool structural_end_mask = true;
    std::uint64_t seed = 1;
};

nlohmann::json to_json(const LocalizerTrainConfig& c);
LocalizerTrainConfig localizer_train_config_from_json(const nlohmann::json& j);

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_start_accuracy;
    int best_epoch = 0;  // 0 = initialization
    double best_val_start_accuracy = 0.0;
};

/// Thrown when the loss becomes non-finite; carries the last finite
/// checkpoint.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, nlohmann::json last_checkpoint)
        : Error(ErrorKind::Divergence, what), last_checkpoint_(std::move(last_checkpoint)) {}
    const nlohmann::json& last_checkpoint() const noexcept { return last_checkpoint_; }

private:
    nlohmann::json last_checkpoint_;
};

/// Adam, mini-batched, teacher-forced. Early-stops on validation start
/// accuracy and returns the best checkpoint.
LocalizerParams train_localizer(const std::vector<LocalizationExample>& train,
                                const std::vector<LocalizationExample>& validation,
                                const LocalizerTrainConfig& config,
                                const EmbeddingConfig& embedding, TrainHistory* history = nullptr);

/// Runs localize() over examples with the context switches of the config.
std::vector<LocalizationResult> predict_all(const Localizer& localizer,
                                            const std::vector<LocalizationExample>& examples,
                                            bool use_line_mask, bool use_comment);

/// Prediction dump record: id, start, end, top-5 start/end candidates.
nlohmann::json prediction_record(const std::string& id, const LocalizationResult& result);

}  // namespace tokfix
