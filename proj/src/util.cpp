#include "tokfix/util.hpp"

#include "tokfix/error.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

namespace tokfix {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Io: return "io-error";
        case ErrorKind::Schema: return "schema-error";
        case ErrorKind::InvalidArgument: return "invalid-argument";
        case ErrorKind::MismatchedSource: return "mismatched-source";
        case ErrorKind::DegeneratePair: return "degenerate-pair";
        case ErrorKind::RegionMismatch: return "region-mismatch";
        case ErrorKind::MaskEmpty: return "mask-empty";
        case ErrorKind::Divergence: return "divergence";
        case ErrorKind::RemoteUnavailable: return "remote-unavailable";
        case ErrorKind::MalformedResponse: return "malformed-response";
        case ErrorKind::Config: return "config-error";
        case ErrorKind::Precondition: return "precondition-error";
        case ErrorKind::TokenizerMismatch: return "tokenizer-mismatch";
        case ErrorKind::InvariantViolation: return "invariant-violation";
    }
    return "unknown-error";
}

bool Error::is_validation() const noexcept {
    switch (kind_) {
        case ErrorKind::Schema:
        case ErrorKind::InvalidArgument:
        case ErrorKind::Config:
        case ErrorKind::InvariantViolation:
            return true;
        default:
            return false;
    }
}

void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, std::string(to_string(kind)) + ": " + what);
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
    if (bound == 0) return 0;
    // Lemire's nearly-divisionless method.
    unsigned __int128 m = static_cast<unsigned __int128>(rng()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        while (low < threshold) {
            m = static_cast<unsigned __int128>(rng()) * bound;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double standard_normal(std::mt19937_64& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) fail(ErrorKind::Io, "read failed for '" + path + "'");
    return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(p.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) fail(ErrorKind::Io, "write failed for '" + path + "'");
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mu);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace tokfix
