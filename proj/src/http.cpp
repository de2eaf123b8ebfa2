#include "tokfix/http.hpp"

#include "tokfix/error.hpp"

#include <httplib.h>

#include <chrono>
#include <thread>

namespace tokfix {

nlohmann::json post_json(const std::string& base_url, const std::string& path,
                         const nlohmann::json& body, const RetryPolicy& policy) {
    httplib::Client client(base_url);
    const auto timeout = std::chrono::milliseconds(policy.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    const std::string payload = body.dump();
    const int attempts = std::max(1, policy.max_attempts);
    double backoff = policy.initial_backoff_ms;
    std::string last_reason;

    for (int attempt = 1; attempt <= attempts; ++attempt) {
        auto res = client.Post(path, payload, "application/json");
        if (!res) {
            last_reason = "connection failed (" + httplib::to_string(res.error()) + ")";
        } else if (res->status == 502 || res->status == 503 || res->status == 504) {
            last_reason = "HTTP " + std::to_string(res->status);
        } else if (res->status < 200 || res->status >= 300) {
            fail(ErrorKind::MalformedResponse,
                 base_url + path + " returned HTTP " + std::to_string(res->status));
        } else {
            try {
                return nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::parse_error& e) {
                fail(ErrorKind::MalformedResponse, base_url + path + ": " + e.what());
            }
        }
        if (attempt < attempts) {
            std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long>(backoff)));
            backoff *= policy.backoff_factor;
        }
    }
    fail(ErrorKind::RemoteUnavailable, base_url + path + " after " + std::to_string(attempts) +
                                           " attempts: " + last_reason);
}

}  // namespace tokfix
