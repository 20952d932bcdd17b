// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstddef>
#include <string>
#include <vector>

namespace erprm {

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{1000};
  double factor = 2.0;
  double jitter = 0.25;  // each wait is scaled by a uniform factor in [1 - jitter, 1 + jitter]
};

struct EndpointSpec {
  /// Scheme, host, port and an optional path prefix; a trailing "/v1" is accepted.
  std::string base_url;
  std::string model;
  std::string api_key;
  RetryPolicy retry;
  std::chrono::seconds timeout{120};
};

/// Fills api_key from ERPRM_API_KEY and, when `base_url` is empty, the URL
/// from ERPRM_BASE_URL. Throws UsageError when either ends up missing.
EndpointSpec endpoint_from_environment(std::string model, std::string base_url = {});

/// POST <base>/v1/chat/completions with model, messages, n, temperature and
/// max_tokens; returns exactly n message texts, issuing follow-up requests when
/// the server returns fewer choices. Retries 429, 5xx and connection failures
/// with exponential backoff; other 4xx fail immediately. Throws TransportError
/// carrying the attempt log.
std::vector<std::string> http_request_completions(const EndpointSpec& endpoint, const std::string& prompt,
                                                  std::size_t n, double temperature, std::size_t max_tokens);

}  // namespace erprm
