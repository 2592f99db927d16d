#pragma once

#include <chrono>
#include <string>
#include <utility>
#include <vector>

namespace rankprobe::http {

struct RetryPolicy {
    unsigned retries = 2;
    std::chrono::milliseconds timeout{30000};
    std::chrono::milliseconds backoff{200};
};

using Headers = std::vector<std::pair<std::string, std::string>>;

/// POSTs a JSON body to an http:// or https:// URL and returns the response body.
/// Connection failures, 429 and 5xx are retried with doubling backoff; other non-2xx
/// statuses fail immediately. Throws TransportError.
std::string post_json(const std::string& url, const std::string& body, const Headers& headers,
                      const RetryPolicy& policy);

/// Value of an environment variable, empty when unset.
std::string env_or_empty(const char* name);

} // namespace rankprobe::http
