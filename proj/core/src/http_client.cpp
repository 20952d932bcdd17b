// SPDX-License-Identifier: Apache-2.0

#include "erprm/http_client.hpp"

#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include "erprm/errors.hpp"
#include "httplib.h"
#include "json.hpp"

namespace erprm {

namespace {

using Json = nlohmann::json;

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // endpoint path
};

SplitUrl split_base_url(const std::string& base_url) {
  const std::size_t scheme = base_url.find("://");
  if (scheme == std::string::npos) {
    throw UsageError("base URL '" + base_url + "' needs a scheme (http:// or https://)");
  }
  const std::size_t slash = base_url.find('/', scheme + 3);
  SplitUrl out;
  out.origin = base_url.substr(0, slash);
  std::string prefix = slash == std::string::npos ? "" : base_url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  if (prefix.size() >= 3 && prefix.compare(prefix.size() - 3, 3, "/v1") == 0) {
    prefix.resize(prefix.size() - 3);
  }
  out.path = prefix + "/v1/chat/completions";
  return out;
}

double jitter_factor(double jitter) {
  thread_local std::mt19937_64 engine{std::random_device{}()};
  std::uniform_real_distribution<double> dist(1.0 - jitter, 1.0 + jitter);
  return dist(engine);
}

struct Attempt {
  bool ok = false;
  bool retryable = false;
  std::string body;
  std::string log;
};

Attempt post_once(httplib::Client& client, const SplitUrl& url, const EndpointSpec& endpoint,
                  const std::string& body) {
  httplib::Headers headers{{"Authorization", "Bearer " + endpoint.api_key}};
  auto res = client.Post(url.path, headers, body, "application/json");
  Attempt a;
  if (!res) {
    a.retryable = true;
    a.log = "connection failure: " + httplib::to_string(res.error());
    return a;
  }
  a.log = "HTTP " + std::to_string(res->status);
  if (res->status == 200) {
    a.ok = true;
    a.body = res->body;
    return a;
  }
  a.retryable = res->status == 429 || res->status >= 500;
  if (!res->body.empty()) a.log += ": " + res->body.substr(0, 200);
  return a;
}

std::vector<std::string> parse_choices(const std::string& body) {
  Json doc;
  try {
    doc = Json::parse(body);
    std::vector<std::string> texts;
    for (const Json& choice : doc.at("choices")) {
      const Json& content = choice.at("message").at("content");
      texts.push_back(content.is_null() ? std::string() : content.get<std::string>());
    }
    return texts;
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("endpoint returned a malformed completion response: ") + e.what(),
                         {"HTTP 200"}, true);
  }
}

}  // namespace

EndpointSpec endpoint_from_environment(std::string model, std::string base_url) {
  EndpointSpec spec;
  spec.model = std::move(model);
  if (base_url.empty()) {
    if (const char* env = std::getenv("ERPRM_BASE_URL")) base_url = env;
  }
  if (base_url.empty()) throw UsageError("no endpoint URL: pass --base-url or set ERPRM_BASE_URL");
  spec.base_url = std::move(base_url);
  const char* key = std::getenv("ERPRM_API_KEY");
  if (key == nullptr || *key == '\0') throw UsageError("ERPRM_API_KEY is not set");
  spec.api_key = key;
  if (spec.model.empty()) throw UsageError("no model given for the HTTP completer");
  return spec;
}

std::vector<std::string> http_request_completions(const EndpointSpec& endpoint, const std::string& prompt,
                                                  std::size_t n, double temperature, std::size_t max_tokens) {
  if (n == 0) throw PreconditionError("completions requested must be >= 1");
  if (endpoint.api_key.empty()) throw UsageError("no API credential for the HTTP completer");
  if (endpoint.retry.max_attempts < 1) throw PreconditionError("retry policy needs at least one attempt");
  const SplitUrl url = split_base_url(endpoint.base_url);

  httplib::Client client(url.origin);
  const auto timeout = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout).count();
  client.set_connection_timeout(timeout, 0);
  client.set_read_timeout(timeout, 0);
  client.set_write_timeout(timeout, 0);

  std::vector<std::string> texts;
  std::vector<std::string> attempt_log;
  while (texts.size() < n) {
    const Json request{{"model", endpoint.model},
                       {"messages", Json::array({Json{{"role", "user"}, {"content", prompt}}})},
                       {"n", n - texts.size()},
                       {"temperature", temperature},
                       {"max_tokens", max_tokens}};
    const std::string body = request.dump();
    Attempt attempt;
    for (int i = 1;; ++i) {
      attempt = post_once(client, url, endpoint, body);
      attempt_log.push_back("attempt " + std::to_string(i) + ": " + attempt.log);
      if (attempt.ok) break;
      if (!attempt.retryable) {
        throw TransportError("endpoint " + endpoint.base_url + " rejected the request (" + attempt.log + ")",
                             attempt_log, true);
      }
      if (i >= endpoint.retry.max_attempts) {
        throw TransportError("endpoint " + endpoint.base_url + " failed after " + std::to_string(i) +
                                 " attempts (" + attempt.log + ")",
                             attempt_log, false);
      }
      const double wait = static_cast<double>(endpoint.retry.base_delay.count()) *
                          std::pow(endpoint.retry.factor, i - 1) * jitter_factor(endpoint.retry.jitter);
      std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long long>(wait)));
    }
    auto batch = parse_choices(attempt.body);
    if (batch.empty()) {
      throw TransportError("endpoint " + endpoint.base_url + " returned no choices", attempt_log, true);
    }
    for (auto& text : batch) {
      if (texts.size() < n) texts.push_back(std::move(text));
    }
  }
  return texts;
}

}  // namespace erprm
