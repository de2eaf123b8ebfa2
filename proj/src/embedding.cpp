#include "tokfix/embedding.hpp"

#include "tokfix/error.hpp"
#include "tokfix/util.hpp"

#include <cmath>

namespace tokfix {

const char* to_string(EmbeddingProvider p) noexcept {
    switch (p) {
        case EmbeddingProvider::Hashed: return "hashed";
        case EmbeddingProvider::TrainableTable: return "trainable_table";
        case EmbeddingProvider::Remote: return "remote";
    }
    return "?";
}

const char* to_string(PositionalEncoding p) noexcept {
    return p == PositionalEncoding::Sinusoidal ? "sinusoidal" : "none";
}

EmbeddingProvider embedding_provider_from_string(const std::string& s) {
    if (s == "hashed" || s == "HASHED") return EmbeddingProvider::Hashed;
    if (s == "trainable_table" || s == "TRAINABLE_TABLE") return EmbeddingProvider::TrainableTable;
    if (s == "remote" || s == "REMOTE") return EmbeddingProvider::Remote;
    fail(ErrorKind::Config, "embedding.provider: unknown provider '" + s + "'");
}

PositionalEncoding positional_from_string(const std::string& s) {
    if (s == "sinusoidal" || s == "SINUSOIDAL") return PositionalEncoding::Sinusoidal;
    if (s == "none" || s == "NONE") return PositionalEncoding::None;
    fail(ErrorKind::Config, "embedding.positional: unknown encoding '" + s + "'");
}

nlohmann::json to_json(const EmbeddingConfig& c) {
    return {{"provider", to_string(c.provider)},
            {"dim", c.dim},
            {"positional", to_string(c.positional)},
            {"positional_scale", c.positional_scale},
            {"seed", c.seed},
            {"table_buckets", c.table_buckets},
            {"endpoint", c.endpoint},
            {"max_attempts", c.retry.max_attempts}};
}

EmbeddingConfig embedding_config_from_json(const nlohmann::json& j) {
    EmbeddingConfig c;
    try {
        if (j.contains("provider")) c.provider = embedding_provider_from_string(j.at("provider").get<std::string>());
        if (j.contains("dim")) c.dim = j.at("dim").get<int>();
        if (j.contains("positional")) c.positional = positional_from_string(j.at("positional").get<std::string>());
        if (j.contains("positional_scale")) c.positional_scale = j.at("positional_scale").get<double>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("table_buckets")) c.table_buckets = j.at("table_buckets").get<int>();
        if (j.contains("endpoint")) c.endpoint = j.at("endpoint").get<std::string>();
        if (j.contains("max_attempts")) c.retry.max_attempts = j.at("max_attempts").get<int>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("embedding: ") + e.what());
    }
    if (c.dim <= 0) fail(ErrorKind::Config, "embedding.dim must be positive");
    if (c.table_buckets <= 0) fail(ErrorKind::Config, "embedding.table_buckets must be positive");
    return c;
}

Eigen::VectorXd HashedVocabulary::vector(const std::string& text) const {
    {
        std::lock_guard lock(mu_);
        if (auto it = cache_.find(text); it != cache_.end()) return it->second;
    }
    std::mt19937_64 rng(mix64(fnv1a64(text) ^ mix64(seed_)));
    Eigen::VectorXd v(dim_);
    for (int i = 0; i < dim_; ++i) v[i] = standard_normal(rng);
    v /= v.norm();
    std::lock_guard lock(mu_);
    cache_.emplace(text, v);
    return v;
}

std::size_t HashedVocabulary::bucket(const std::string& text, std::size_t buckets) const {
    return static_cast<std::size_t>(mix64(fnv1a64(text) ^ seed_) % buckets);
}

Eigen::VectorXd positional_vector(std::size_t position, int dim, double scale) {
    Eigen::VectorXd pe(dim);
    const double pos = static_cast<double>(position);
    for (int i = 0; i < dim; i += 2) {
        const double rate = std::pow(10000.0, -static_cast<double>(i) / dim);
        pe[i] = std::sin(pos * rate);
        if (i + 1 < dim) pe[i + 1] = std::cos(pos * rate);
    }
    return pe * scale;
}

std::vector<std::string> context_tokens(const std::optional<std::string>& comment) {
    if (!comment) return {};
    return tokenize(*comment, TokenizerId::Loc).texts();
}

}  // namespace tokfix
