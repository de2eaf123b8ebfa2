#pragma once

#include "tokfix/http.hpp"
#include "tokfix/tokenizer.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace tokfix {

enum class EmbeddingProvider { Hashed, TrainableTable, Remote };
enum class PositionalEncoding { Sinusoidal, None };

const char* to_string(EmbeddingProvider p) noexcept;
const char* to_string(PositionalEncoding p) noexcept;
EmbeddingProvider embedding_provider_from_string(const std::string& s);
PositionalEncoding positional_from_string(const std::string& s);

struct EmbeddingConfig {
    EmbeddingProvider provider = EmbeddingProvider::Hashed;
    int dim = 256;
    PositionalEncoding positional = PositionalEncoding::Sinusoidal;
    /// Multiplier on the sinusoidal table; 0 means sqrt(2/dim), which gives
    /// the positional vector unit norm like the token vectors.
    double positional_scale = 1.0;
    std::uint64_t seed = 1;
    /// TrainableTable: number of hash buckets in the table.
    int table_buckets = 4096;
    /// Remote: base URL of the embedding service, e.g. http://127.0.0.1:8080
    std::string endpoint;
    RetryPolicy retry;

    bool operator==(const EmbeddingConfig& o) const {
        return provider == o.provider && dim == o.dim && positional == o.positional &&
               positional_scale == o.positional_scale && seed == o.seed &&
               table_buckets == o.table_buckets && endpoint == o.endpoint;
    }
};

nlohmann::json to_json(const EmbeddingConfig& cfg);
EmbeddingConfig embedding_config_from_json(const nlohmann::json& j);

/// Embeddings of one input: rows [0, n) are the code tokens, rows [n, n + m)
/// the appended context tokens.
struct EmbeddedInput {
    Eigen::MatrixXd rows;
    std::size_t n_code = 0;
    /// Table bucket per row (TrainableTable only).
    std::vector<std::size_t> buckets;
    /// Encoder-provided class vector (Remote only).
    std::optional<Eigen::VectorXd> cls;

    std::size_t n_context() const { return static_cast<std::size_t>(rows.rows()) - n_code; }
};

/// Deterministic unit-norm vector for a token text. Pure function of
/// (text, seed, dim); results are memoized.
class HashedVocabulary {
public:
    HashedVocabulary(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}
    Eigen::VectorXd vector(const std::string& text) const;
    std::size_t bucket(const std::string& text, std::size_t buckets) const;

private:
    int dim_;
    std::uint64_t seed_;
    mutable std::mutex mu_;
    mutable std::unordered_map<std::string, Eigen::VectorXd> cache_;
};

/// Sinusoidal encoding of one position, already scaled.
Eigen::VectorXd positional_vector(std::size_t position, int dim, double scale);

/// Tokenizes the comment with the LOC tokenizer and returns the token texts.
std::vector<std::string> context_tokens(const std::optional<std::string>& comment);

}  // namespace tokfix
