#pragma once

#include "tokfix/corpus.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace tokfix {

/// Full run configuration with every key present.
nlohmann::json default_run_config();

/// Applies one "dotted.key=value" override. The value is parsed as JSON when
/// possible and taken as a string otherwise. Unknown keys are config errors.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Defaults, then the file (if any), then the overrides. Every key in the
/// file must exist in the defaults.
nlohmann::json resolve_run_config(const std::optional<std::string>& path,
                                  const std::vector<std::string>& overrides);

/// Fingerprint of the experiment settings; output locations are left out so
/// the same experiment in two directories fingerprints the same.
std::string run_fingerprint(const nlohmann::json& config);

/// Subcommands over one resolved configuration. File locations come from the
/// `paths` section, relative to `output_dir` unless absolute.
class Run {
public:
    explicit Run(nlohmann::json config);

    const nlohmann::json& config() const noexcept { return config_; }
    std::string path(const std::string& key) const;

    void gen_synthetic();
    void ingest(const std::string& input);
    void split();
    void oracle();
    void train_loc();
    /// Returns 0, or 2 when a metric invariant fails.
    int eval_loc();
    void collect_adjust();
    void train_adjust();
    void fix();
    /// Returns the process exit code: 0, or 2 when a metric invariant fails.
    int evaluate();
    /// oracle -> train-loc -> (collect-adjust -> train-adjust) -> fix ->
    /// evaluate, preceded by gen-synthetic and split when configured.
    int pipeline();

private:
    std::vector<BugFixSample> corpus() const;
    std::vector<BugFixSample> split_samples(const std::string& which) const;
    void write_resolved_config() const;
    /// A config section with a null seed replaced by the global one.
    nlohmann::json section(const std::string& name) const;

    nlohmann::json config_;
};

}  // namespace tokfix
