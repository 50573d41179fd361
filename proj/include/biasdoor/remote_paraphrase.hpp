#pragma once

// HTTP client for an external paraphrase service.
//
// Wire protocol (JSON over a single POST):
//   request   {"text": str, "n": int,
//              "params": {"num_beams": 5, "repetition_penalty": 10,
//                         "diversity_penalty": 3, "temperature": 0.7}}
//   response  {"variants": [str, ...]}
// Empty variants are dropped and at most n are kept.

#include <chrono>
#include <cstdlib>
#include <memory>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "biasdoor/error.hpp"
#include "biasdoor/paraphrase.hpp"

namespace biasdoor {

inline constexpr const char* kParaphraseUrlEnv = "BIASDOOR_PARAPHRASE_URL";

struct GenerationParams {
  int num_beams = 5;
  double repetition_penalty = 10.0;
  double diversity_penalty = 3.0;
  double temperature = 0.7;
};

struct RemoteParaphraserConfig {
  /// http://host[:port][/path]
  std::string url;
  std::chrono::milliseconds timeout{30000};
  GenerationParams params;
  std::size_t max_in_flight = 4;

  /// Reads the endpoint from BIASDOOR_PARAPHRASE_URL.
  static RemoteParaphraserConfig from_env() {
    const char* url = std::getenv(kParaphraseUrlEnv);
    if (url == nullptr || *url == '\0')
      throw ConfigError(std::string(kParaphraseUrlEnv) + " is not set");
    RemoteParaphraserConfig cfg;
    cfg.url = url;
    return cfg;
  }
};

inline nlohmann::json make_paraphrase_request(std::string_view text, std::size_t n,
                                              const GenerationParams& params) {
  return {{"text", std::string(text)},
          {"n", n},
          {"params",
           {{"num_beams", params.num_beams},
            {"repetition_penalty", params.repetition_penalty},
            {"diversity_penalty", params.diversity_penalty},
            {"temperature", params.temperature}}}};
}

inline std::vector<std::string> parse_paraphrase_response(std::string_view body, std::size_t n) {
  const auto doc = nlohmann::json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("variants") ||
      !doc["variants"].is_array())
    throw ProviderError("paraphrase response is not {\"variants\": [...]}");
  std::vector<std::string> out;
  for (const auto& v : doc["variants"]) {
    if (!v.is_string()) throw ProviderError("paraphrase variant is not a string");
    auto s = v.get<std::string>();
    if (normalize_whitespace(s).empty()) continue;
    if (out.size() == n) break;
    out.push_back(std::move(s));
  }
  return out;
}

class RemoteParaphraser final : public ParaphraseProvider {
 public:
  explicit RemoteParaphraser(RemoteParaphraserConfig config)
      : config_(std::move(config)),
        slots_(std::make_unique<std::counting_semaphore<>>(
            static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, config_.max_in_flight)))) {
    constexpr std::string_view scheme = "http://";
    if (config_.url.rfind(scheme, 0) != 0)
      throw ConfigError("paraphrase endpoint must be an http:// URL, got '" + config_.url + "'");
    const auto slash = config_.url.find('/', scheme.size());
    origin_ = config_.url.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : config_.url.substr(slash);
    if (origin_.size() == scheme.size()) throw ConfigError("paraphrase endpoint has no host");
  }

  std::string_view kind() const noexcept override { return "remote"; }
  const RemoteParaphraserConfig& config() const noexcept { return config_; }

  ParaphraseSet paraphrase(std::string_view text, std::size_t n) const override {
    check_request(text, n);
    const std::string body = make_paraphrase_request(text, n, config_.params).dump();

    slots_->acquire();
    struct Release {
      std::counting_semaphore<>* s;
      ~Release() { s->release(); }
    } release{slots_.get()};

    httplib::Client client(origin_);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);
    const auto res = client.Post(path_, body, "application/json");
    if (!res) throw ProviderError("paraphrase request to " + config_.url + " failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw ProviderError("paraphrase service returned HTTP " + std::to_string(res->status));
    return {std::string(text), parse_paraphrase_response(res->body, n)};
  }

 private:
  RemoteParaphraserConfig config_;
  std::unique_ptr<std::counting_semaphore<>> slots_;
  std::string origin_;
  std::string path_;
};

}  // namespace biasdoor
