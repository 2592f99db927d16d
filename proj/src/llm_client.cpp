#include "rankprobe/llm_client.hpp"

#include "rankprobe/error.hpp"

#include <json.hpp>

namespace rankprobe {

HttpLlmClient::HttpLlmClient(std::string endpoint, http::RetryPolicy policy,
                             std::optional<std::filesystem::path> audit_log)
    : endpoint_(std::move(endpoint)), policy_(policy), api_key_(http::env_or_empty("RANKPROBE_LLM_API_KEY")) {
    if (audit_log) {
        audit_.emplace(*audit_log, std::ios::app);
        if (!*audit_) throw IoError("cannot open audit log " + audit_log->string());
    }
}

std::string HttpLlmClient::complete(const ChatRequest& request) const {
    using nlohmann::json;
    const json body{{"model", request.model},
                    {"temperature", request.temperature},
                    {"messages",
                     json::array({{{"role", "system"}, {"content", request.system}},
                                  {{"role", "user"}, {"content", request.user}}})}};
    http::Headers headers;
    if (!api_key_.empty()) headers.emplace_back("Authorization", "Bearer " + api_key_);
    const std::string payload = body.dump();
    const std::string response = http::post_json(endpoint_, payload, headers, policy_);
    audit(payload, response);
    try {
        return json::parse(response).at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw TransportError(std::string("malformed chat response: ") + e.what());
    }
}

void HttpLlmClient::audit(const std::string& request, const std::string& response) const {
    if (!audit_) return;
    using nlohmann::json;
    json line{{"request", json::parse(request)}, {"response", response}};
    std::lock_guard lock(audit_mutex_);
    *audit_ << line.dump() << '\n';
    audit_->flush();
}

} // namespace rankprobe
