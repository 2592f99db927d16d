#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "rankprobe/http.hpp"

#include "rankprobe/error.hpp"

#include <spdlog/spdlog.h>

#include <cstdlib>
#include <thread>

namespace rankprobe::http {
namespace {

struct SplitUrl {
    std::string origin;
    std::string path;
};

SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw TransportError("endpoint '" + url + "' lacks a scheme");
    const auto scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") throw TransportError("unsupported scheme in '" + url + "'");
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

} // namespace

std::string post_json(const std::string& url, const std::string& body, const Headers& headers,
                      const RetryPolicy& policy) {
    const auto target = split_url(url);
    httplib::Client client(target.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(policy.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(policy.timeout - secs);
    client.set_connection_timeout(secs.count(), static_cast<time_t>(usecs.count()));
    client.set_read_timeout(secs.count(), static_cast<time_t>(usecs.count()));
    client.set_write_timeout(secs.count(), static_cast<time_t>(usecs.count()));

    httplib::Headers hdrs;
    for (const auto& [k, v] : headers) hdrs.emplace(k, v);

    std::string last_error;
    auto delay = policy.backoff;
    for (unsigned attempt = 0; attempt <= policy.retries; ++attempt) {
        if (attempt > 0) {
            spdlog::warn("POST {} failed ({}), retry {}/{}", url, last_error, attempt, policy.retries);
            std::this_thread::sleep_for(delay);
            delay *= 2;
        }
        auto res = client.Post(target.path, hdrs, body, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 200 && res->status < 300) return res->body;
        last_error = "HTTP " + std::to_string(res->status);
        if (res->status != 429 && res->status < 500) break;
    }
    throw TransportError("POST " + url + ": " + last_error);
}

std::string env_or_empty(const char* name) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::string();
}

} // namespace rankprobe::http
