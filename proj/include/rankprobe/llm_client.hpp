#pragma once

#include "rankprobe/http.hpp"

#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>

namespace rankprobe {

struct ChatRequest {
    std::string model;
    std::string system;
    std::string user;
    double temperature = 0.7;
};

/// Narrow LLM interface: model plus system/user text in, completion text out.
/// Implementations must tolerate concurrent calls.
class LlmClient {
  public:
    virtual ~LlmClient() = default;
    /// TransportError when the service cannot be reached after retries.
    [[nodiscard]] virtual std::string complete(const ChatRequest& request) const = 0;
};

/// OpenAI-compatible chat-completions client.
///
/// POST <endpoint>
///   {"model": str, "temperature": float,
///    "messages": [{"role": "system", "content": str}, {"role": "user", "content": str}]}
/// -> {"choices": [{"message": {"content": str}}]}
///
/// The bearer token comes from RANKPROBE_LLM_API_KEY. With an audit path, every
/// request/response pair is appended to it as one JSON line.
class HttpLlmClient final : public LlmClient {
  public:
    HttpLlmClient(std::string endpoint, http::RetryPolicy policy = {},
                  std::optional<std::filesystem::path> audit_log = std::nullopt);

    [[nodiscard]] std::string complete(const ChatRequest& request) const override;

  private:
    void audit(const std::string& request, const std::string& response) const;

    std::string endpoint_;
    http::RetryPolicy policy_;
    std::string api_key_;
    mutable std::mutex audit_mutex_;
    mutable std::optional<std::ofstream> audit_;
};

} // namespace rankprobe
