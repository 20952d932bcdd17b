// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstdlib>
#include <thread>

#include "doctest.h"
#include "erprm/errors.hpp"
#include "erprm/http_client.hpp"
#include "erprm/labeling.hpp"
#include "httplib.h"
#include "json.hpp"

using namespace erprm;
using nlohmann::json;

namespace {

// Local chat-completions endpoint whose first `failures` requests get `fail_status`.
class MockServer {
 public:
  MockServer(int failures, int fail_status, std::string reply = "Step 1: The answer is 5")
      : failures_(failures), fail_status_(fail_status), reply_(std::move(reply)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int call = calls_++;
      last_auth_ = req.get_header_value("Authorization");
      if (call < failures_) {
        res.status = fail_status_;
        res.set_content("{\"error\":\"busy\"}", "application/json");
        return;
      }
      const json body = json::parse(req.body);
      last_prompt_ = body["messages"][0]["content"].get<std::string>();
      // Return at most two choices per call, so larger n needs several calls.
      const std::size_t n = std::min<std::size_t>(body["n"].get<std::size_t>(), 2);
      json choices = json::array();
      for (std::size_t i = 0; i < n; ++i) choices.push_back({{"index", i}, {"message", {{"role", "assistant"}, {"content", reply_}}}});
      res.set_content(json{{"choices", choices}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockServer() {
    server_.stop();
    thread_.join();
  }
  EndpointSpec endpoint(int attempts = 3) const {
    EndpointSpec e;
    e.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
    e.model = "mock";
    e.api_key = "test-key";
    e.retry.max_attempts = attempts;
    e.retry.base_delay = std::chrono::milliseconds(1);
    e.timeout = std::chrono::seconds(5);
    return e;
  }
  int calls() const { return calls_; }
  std::string last_auth() const { return last_auth_; }
  std::string last_prompt() const { return last_prompt_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> calls_{0};
  int failures_;
  int fail_status_;
  std::string reply_;
  std::string last_auth_;
  std::string last_prompt_;
};

}  // namespace

TEST_CASE("completions are collected across batches with the bearer credential") {
  MockServer server(0, 200);
  const auto texts = http_request_completions(server.endpoint(), "hi", 5, 0.7, 64);
  CHECK(texts.size() == 5);
  CHECK(server.calls() == 3);
  CHECK(server.last_auth() == "Bearer test-key");
}

TEST_CASE("server errors and rate limits are retried") {
  MockServer busy(2, 503);
  CHECK(http_request_completions(busy.endpoint(3), "hi", 1, 0.7, 64).size() == 1);
  CHECK(busy.calls() == 3);
  MockServer limited(1, 429);
  CHECK(http_request_completions(limited.endpoint(2), "hi", 1, 0.7, 64).size() == 1);
}

TEST_CASE("retries are bounded and client errors are permanent") {
  MockServer down(10, 500);
  try {
    http_request_completions(down.endpoint(3), "hi", 1, 0.7, 64);
    FAIL("expected a transport error");
  } catch (const TransportError& e) {
    CHECK_FALSE(e.permanent());
    CHECK(e.attempts().size() == 3);
  }
  MockServer rejected(10, 401);
  try {
    http_request_completions(rejected.endpoint(3), "hi", 1, 0.7, 64);
    FAIL("expected a transport error");
  } catch (const TransportError& e) {
    CHECK(e.permanent());
    CHECK(rejected.calls() == 1);
  }
}

TEST_CASE("unreachable endpoints fail with a transport error") {
  EndpointSpec e;
  e.base_url = "http://127.0.0.1:1";
  e.model = "m";
  e.api_key = "k";
  e.retry.max_attempts = 2;
  e.retry.base_delay = std::chrono::milliseconds(1);
  e.timeout = std::chrono::seconds(1);
  CHECK_THROWS_AS(http_request_completions(e, "hi", 1, 0.7, 8), TransportError);
  e.base_url = "no-scheme";
  CHECK_THROWS_AS(http_request_completions(e, "hi", 1, 0.7, 8), UsageError);
}

TEST_CASE("endpoint settings come from the environment") {
  ::setenv("ERPRM_BASE_URL", "http://example.invalid", 1);
  ::setenv("ERPRM_API_KEY", "secret", 1);
  const EndpointSpec e = endpoint_from_environment("m");
  CHECK(e.base_url == "http://example.invalid");
  CHECK(e.api_key == "secret");
  CHECK(endpoint_from_environment("m", "http://other").base_url == "http://other");
  ::unsetenv("ERPRM_API_KEY");
  CHECK_THROWS_AS(endpoint_from_environment("m"), UsageError);
  ::unsetenv("ERPRM_BASE_URL");
}

TEST_CASE("HTTP completer continues prefixes and flags unparseable replies") {
  MockServer server(0, 200, "Step 2: The answer is 5");
  const HttpCompleter completer(server.endpoint(), CompleterSpec{});
  const Problem problem{"q", "What is 2+3?", "5"};
  const PartialChain prefix{"q", {"add the numbers"}};
  const auto out = completer.complete(problem, prefix, 3, StreamKey(0));
  REQUIRE(out.size() == 3);
  CHECK(out[0].correct);
  CHECK(out[0].steps == std::vector<std::string>{"add the numbers", "The answer is 5"});
  CHECK(server.last_prompt().find("Continue from Step 2") != std::string::npos);

  const Completion bad = completer.interpret(problem, prefix, "Step 7: nonsense");
  CHECK(bad.parse_failure);
  CHECK_FALSE(bad.correct);

  // A prefix that already states its answer needs no request.
  const int before = server.calls();
  const auto done = completer.complete(problem, PartialChain{"q", {"The answer is 5"}}, 4, StreamKey(0));
  CHECK(done.size() == 4);
  CHECK(done[0].correct);
  CHECK(server.calls() == before);
}
