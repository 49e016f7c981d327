#pragma once

#include <stdexcept>
#include <string>

namespace pevo {

class BackendError : public std::runtime_error {
 public:
  BackendError(const std::string& what, bool retryable)
      : std::runtime_error(what), retryable_(retryable) {}

  bool retryable() const { return retryable_; }

 private:
  bool retryable_;
};

struct RetryPolicy {
  int retries = 3;          // additional attempts after the first
  int backoff_base_ms = 500;  // doubles per attempt
};

// 429 and 5xx are transient; everything else in 4xx is a caller bug.
bool status_retryable(int status);

// POSTs a JSON body to a full URL ("http://host:port/path"). Sends
// "Authorization: Bearer $VALUE" when api_key_env names a set env var.
// Retries transport failures and retryable statuses per the policy; throws
// BackendError once attempts are exhausted or on a non-retryable status.
std::string http_post_json_with_retries(const std::string& url,
                                        const std::string& api_key_env,
                                        const std::string& body,
                                        const RetryPolicy& policy);

}  // namespace pevo
