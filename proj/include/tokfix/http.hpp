#pragma once

#include <nlohmann/json.hpp>

#include <string>

namespace tokfix {

struct RetryPolicy {
    int max_attempts = 3;
    int initial_backoff_ms = 50;
    double backoff_factor = 2.0;
    int timeout_ms = 30000;
};

/// POSTs a JSON body to base_url + path and returns the parsed JSON reply.
/// Connection failures and 502/503/504 are retried with exponential backoff;
/// once attempts run out the call fails with remote-unavailable. Any other
/// non-2xx status or an unparseable body is malformed-response.
nlohmann::json post_json(const std::string& base_url, const std::string& path,
                         const nlohmann::json& body, const RetryPolicy& policy);

}  // namespace tokfix
