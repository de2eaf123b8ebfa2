#pragma once

#include "tokfix/backend.hpp"
#include "tokfix/corpus.hpp"
#include "tokfix/embedding.hpp"
#include "tokfix/localizer.hpp"
#include "tokfix/prompts.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tokfix {

inline constexpr int kMaxShift = 3;
inline constexpr int kShiftClasses = 2 * kMaxShift + 1;

struct AdjustmentExample {
    std::string sample_id;
    std::size_t predicted_start = 0;  // FIX index
    Eigen::VectorXd feature;
    /// Meaningful only when viable_shifts is non-empty.
    int label = 0;
    std::vector<int> viable_shifts;
};

/// Smallest |shift| among the viable ones, negative first on ties.
std::optional<int> label_from_viable(const std::vector<int>& viable);

nlohmann::json to_json(const AdjustmentExample& e);
/// Features are not stored; see attach_features.
AdjustmentExample adjustment_example_from_json(const nlohmann::json& j);
void write_adjustment_dataset(const std::string& path, const std::vector<AdjustmentExample>& examples);
std::vector<AdjustmentExample> load_adjustment_dataset(const std::string& path);

/// Token-window features over the FIX view. Token vectors come from the
/// configured provider without positional encoding (a trainable table falls
/// back to hashed vectors of the same dimension).
class FeatureEncoder {
public:
    FeatureEncoder(const EmbeddingConfig& embedding, bool single_embedding);

    /// One row per FIX token.
    Eigen::MatrixXd token_rows(const TokenizedFunction& fix) const;
    /// Rows center-3 .. center+3 concatenated, zero-padded at the ends; just
    /// the center row in single-embedding mode.
    Eigen::VectorXd window(const Eigen::MatrixXd& rows, std::size_t center) const;
    Eigen::VectorXd feature(const TokenizedFunction& fix, std::size_t center) const;

    int feature_dim() const;
    bool single_embedding() const noexcept { return single_; }

private:
    EmbeddingConfig config_;
    bool single_;
    std::shared_ptr<const Localizer> embedder_;
};

struct AdjusterParams {
    EmbeddingConfig embedding;
    bool single_embedding = false;
    Eigen::MatrixXd weights;  // 7 x feature_dim
    Eigen::VectorXd bias;     // 7

    bool all_finite() const;
    bool operator==(const AdjusterParams& o) const;
};

nlohmann::json to_checkpoint(const AdjusterParams& params);
AdjusterParams adjuster_from_checkpoint(const nlohmann::json& j);
void save_adjuster(const std::string& path, const AdjusterParams& params);
AdjusterParams load_adjuster(const std::string& path);

struct CollectConfig {
    PromptStyle style = PromptStyle::P3;
    /// Generations per shifted prompt.
    int probes = 1;
    int max_new_tokens = 256;
    double temperature = 0.8;
    std::uint64_t seed = 1;
    bool use_line_mask = false;
    bool use_comment = false;
    bool single_embedding = false;
    int max_in_flight = 4;
};

/// Probes the fixer with the predicted start shifted by -3..+3 (clamped) and
/// records which shifts yield an exact fix. Samples with no viable shift are
/// kept in the output with an empty set; `dropped` counts them.
std::vector<AdjustmentExample> collect_adjustment_data(const std::vector<BugFixSample>& samples,
                                                       const Localizer& localizer,
                                                       const CompletionBackend& backend,
                                                       const CollectConfig& config,
                                                       std::size_t* dropped = nullptr);

/// Recomputes features for examples read from a dataset file.
void attach_features(std::vector<AdjustmentExample>& examples, const std::vector<BugFixSample>& samples,
                     const FeatureEncoder& encoder);

struct AdjusterTrainConfig {
    int epochs = 200;
    int batch_size = 32;
    double learning_rate = 1e-2;
    int patience = 20;
    double holdout_fraction = 0.1;
    std::uint64_t seed = 1;
};

nlohmann::json to_json(const AdjusterTrainConfig& c);
AdjusterTrainConfig adjuster_train_config_from_json(const nlohmann::json& j);

struct AdjusterHistory {
    std::size_t trained_on = 0;
    std::size_t held_out = 0;
    std::size_t dropped = 0;  // examples without a viable shift
    double train_accuracy = 0.0;
    double holdout_accuracy = 0.0;
    int best_epoch = 0;
};

/// Multinomial logistic regression with Adam; returns the best checkpoint on
/// a seeded holdout. Needs at least 50 labeled examples.
AdjusterParams train_adjuster(const std::vector<AdjustmentExample>& examples,
                              const EmbeddingConfig& embedding, const AdjusterTrainConfig& config,
                              bool single_embedding = false, AdjusterHistory* history = nullptr);

class Adjuster {
public:
    explicit Adjuster(AdjusterParams params);

    const AdjusterParams& params() const noexcept { return params_; }
    Eigen::VectorXd class_scores(const Eigen::VectorXd& feature) const;
    int shift_for(const Eigen::VectorXd& feature) const;
    /// clamp(predicted_start + shift, 0, n - 1)
    std::size_t adjust(const TokenizedFunction& fix, std::size_t predicted_start) const;

private:
    AdjusterParams params_;
    FeatureEncoder encoder_;
};

/// Region moved to an adjusted start. The end follows only as far as needed
/// to keep the region well-formed.
BugRegion shift_region(const BugRegion& region, std::size_t new_start);

}  // namespace tokfix
