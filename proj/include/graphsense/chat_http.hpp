#pragma once

// HTTP chat-completion client. Speaks the de-facto chat wire shape: POST a
// JSON body {model, messages:[{role:"user", content}], temperature} with a
// bearer token, read choices[0].message.content. Transient failures (network
// errors, timeouts, HTTP 429/5xx) are retried with exponential backoff
// backoff_base * 2^attempt; other 4xx fail immediately.

#include <chrono>
#include <cmath>
#include <sstream>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "graphsense/expand.hpp"
#include "graphsense/util.hpp"

namespace graphsense {

namespace detail {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // starts with '/'
};

inline ParsedUrl parse_url(const std::string& url) {
  std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("endpoint url must start with http:// or https://: " + url);
  }
  std::size_t path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace detail

class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(EndpointConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    detail::parse_url(cfg_.base_url);  // fail fast on bad urls
  }

  std::string complete(const std::string& prompt) override {
    std::optional<std::string> key = env_var(cfg_.api_key_env_var);
    if (!key) {
      throw ChatError("api key environment variable '" + cfg_.api_key_env_var + "' is not set");
    }
    nlohmann::ordered_json body;
    body["model"] = cfg_.model_name;
    body["messages"] = nlohmann::ordered_json::array(
        {nlohmann::ordered_json{{"role", "user"}, {"content", prompt}}});
    body["temperature"] = cfg_.temperature;
    const std::string payload = body.dump();

    detail::ParsedUrl url = detail::parse_url(cfg_.base_url);
    std::ostringstream attempt_log;
    for (int attempt = 0;; ++attempt) {
      httplib::Client cli(url.origin);
      set_timeouts(cli);
      httplib::Headers headers = {{"Authorization", "Bearer " + *key}};
      httplib::Result res = cli.Post(url.path, headers, payload, "application/json");

      if (res && res->status >= 200 && res->status < 300) {
        return extract_content(res->body);
      }
      bool transient = !res || res->status == 429 || res->status >= 500;
      if (attempt > 0) attempt_log << "; ";
      attempt_log << "attempt " << attempt + 1 << ": "
                  << (res ? "HTTP " + std::to_string(res->status)
                          : "network error (" + httplib::to_string(res.error()) + ")");
      if (!transient) {
        throw ChatError("chat endpoint failed: " + attempt_log.str());
      }
      if (attempt >= cfg_.max_retries) {
        throw ChatError("chat endpoint retries exhausted after " + std::to_string(attempt + 1) +
                        " requests: " + attempt_log.str());
      }
      double delay = cfg_.backoff_base_seconds * std::pow(2.0, attempt);
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
  }

  const EndpointConfig& config() const { return cfg_; }

 private:
  void set_timeouts(httplib::Client& cli) const {
    auto seconds = static_cast<time_t>(cfg_.timeout_seconds);
    auto micros = static_cast<time_t>((cfg_.timeout_seconds - static_cast<double>(seconds)) * 1e6);
    cli.set_connection_timeout(seconds, micros);
    cli.set_read_timeout(seconds, micros);
    cli.set_write_timeout(seconds, micros);
  }

  static std::string extract_content(const std::string& body) {
    try {
      nlohmann::json j = nlohmann::json::parse(body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ChatError(std::string("malformed response body: ") + e.what());
    }
  }

  EndpointConfig cfg_;
};

}  // namespace graphsense
