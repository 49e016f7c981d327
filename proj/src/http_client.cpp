#include "promptevo/http_client.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include "httplib.h"

namespace pevo {

bool status_retryable(int status) {
  return status == 429 || (status >= 500 && status < 600);
}

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw BackendError("malformed URL (missing scheme): " + url, false);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    return {url, "/"};
  }
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

std::string http_post_json_with_retries(const std::string& url,
                                        const std::string& api_key_env,
                                        const std::string& body,
                                        const RetryPolicy& policy) {
  const ParsedUrl parsed = parse_url(url);

  httplib::Headers headers;
  if (!api_key_env.empty()) {
    if (const char* key = std::getenv(api_key_env.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }

  std::string last_error;
  for (int attempt = 0; attempt <= policy.retries; ++attempt) {
    if (attempt > 0) {
      const auto delay =
          std::chrono::milliseconds(policy.backoff_base_ms) * (1ll << (attempt - 1));
      std::this_thread::sleep_for(delay);
    }

    httplib::Client client(parsed.origin);
    client.set_connection_timeout(30, 0);
    client.set_read_timeout(300, 0);
    client.set_write_timeout(30, 0);

    auto res = client.Post(parsed.path, headers, body, "application/json");
    if (!res) {
      last_error = "transport failure talking to " + url + ": " +
                   httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) {
      return res->body;
    }
    if (!status_retryable(res->status)) {
      throw BackendError("HTTP " + std::to_string(res->status) + " from " + url +
                             ": " + res->body,
                         false);
    }
    last_error = "HTTP " + std::to_string(res->status) + " from " + url;
  }
  throw BackendError(last_error + " (after " + std::to_string(policy.retries + 1) +
                         " attempts)",
                     true);
}

}  // namespace pevo
