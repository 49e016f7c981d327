#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "promptevo/backends.hpp"
#include "promptevo/embedding.hpp"
#include "promptevo/http_client.hpp"

using namespace pevo;

namespace {

constexpr int kFastBackoffMs = 1;

struct LocalServer {
  httplib::Server svr;
  int port = 0;
  std::thread worker;

  void start() {
    port = svr.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    worker = std::thread([this] { svr.listen_after_bind(); });
    svr.wait_until_ready();
  }

  std::string url(const std::string& path = "") const {
    return "http://127.0.0.1:" + std::to_string(port) + path;
  }

  ~LocalServer() {
    svr.stop();
    if (worker.joinable()) worker.join();
  }
};

// Accepts TCP connections and closes them without answering, so requests
// die on the read, not on a connect timeout the sandbox may swallow.
struct SlamServer {
  int listen_fd = -1;
  int port = 0;
  std::thread worker;

  SlamServer() {
    listen_fd = ::socket(AF_INET, SOCK_STREAM, 0);
    REQUIRE(listen_fd >= 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    REQUIRE(::bind(listen_fd, reinterpret_cast<sockaddr*>(&addr),
                   sizeof addr) == 0);
    REQUIRE(::listen(listen_fd, 8) == 0);
    socklen_t len = sizeof addr;
    REQUIRE(::getsockname(listen_fd, reinterpret_cast<sockaddr*>(&addr),
                          &len) == 0);
    port = ntohs(addr.sin_port);
    worker = std::thread([this] {
      for (;;) {
        const int fd = ::accept(listen_fd, nullptr, nullptr);
        if (fd < 0) return;
        ::close(fd);
      }
    });
  }

  ~SlamServer() {
    ::shutdown(listen_fd, SHUT_RDWR);
    ::close(listen_fd);
    if (worker.joinable()) worker.join();
  }
};

}  // namespace

TEST_SUITE("http") {

TEST_CASE("retryable statuses are 429 and the 5xx block") {
  CHECK(status_retryable(429));
  CHECK(status_retryable(500));
  CHECK(status_retryable(503));
  CHECK(status_retryable(599));
  CHECK_FALSE(status_retryable(200));
  CHECK_FALSE(status_retryable(301));
  CHECK_FALSE(status_retryable(400));
  CHECK_FALSE(status_retryable(404));
}

TEST_CASE("post returns the body and sends the bearer token when set") {
  LocalServer server;
  std::string seen_body;
  std::string seen_auth = "<missing>";
  server.svr.Post("/echo", [&](const httplib::Request& req,
                               httplib::Response& res) {
    seen_body = req.body;
    seen_auth = req.has_header("Authorization")
                    ? req.get_header_value("Authorization")
                    : "<missing>";
    res.set_content("pong", "application/json");
  });
  server.start();

  setenv("PEVO_TEST_API_KEY", "sekrit", 1);
  RetryPolicy policy{0, kFastBackoffMs};
  CHECK(http_post_json_with_retries(server.url("/echo"), "PEVO_TEST_API_KEY",
                                    "{\"x\":1}", policy) == "pong");
  CHECK(seen_body == "{\"x\":1}");
  CHECK(seen_auth == "Bearer sekrit");

  unsetenv("PEVO_TEST_API_KEY");
  CHECK(http_post_json_with_retries(server.url("/echo"), "PEVO_TEST_API_KEY",
                                    "{}", policy) == "pong");
  CHECK(seen_auth == "<missing>");

  CHECK(http_post_json_with_retries(server.url("/echo"), "", "{}", policy) ==
        "pong");
  CHECK(seen_auth == "<missing>");
}

TEST_CASE("transient statuses are retried until the server recovers") {
  LocalServer server;
  std::atomic<int> calls{0};
  server.svr.Post("/flaky", [&](const httplib::Request&,
                                httplib::Response& res) {
    if (++calls <= 2) {
      res.status = 500;
      res.set_content("busy", "text/plain");
    } else {
      res.set_content("finally", "text/plain");
    }
  });
  server.start();

  RetryPolicy policy{3, kFastBackoffMs};
  CHECK(http_post_json_with_retries(server.url("/flaky"), "", "{}", policy) ==
        "finally");
  CHECK(calls.load() == 3);
}

TEST_CASE("client errors fail immediately and read as non-retryable") {
  LocalServer server;
  std::atomic<int> calls{0};
  server.svr.Post("/bad", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 400;
    res.set_content("nope", "text/plain");
  });
  server.start();

  RetryPolicy policy{3, kFastBackoffMs};
  try {
    http_post_json_with_retries(server.url("/bad"), "", "{}", policy);
    FAIL("expected BackendError");
  } catch (const BackendError& e) {
    CHECK_FALSE(e.retryable());
  }
  CHECK(calls.load() == 1);
}

TEST_CASE("retry budget exhaustion surfaces as a retryable error") {
  LocalServer server;
  std::atomic<int> calls{0};
  server.svr.Post("/throttle", [&](const httplib::Request&,
                                   httplib::Response& res) {
    ++calls;
    res.status = 429;
    res.set_content("slow down", "text/plain");
  });
  server.start();

  RetryPolicy policy{2, kFastBackoffMs};
  try {
    http_post_json_with_retries(server.url("/throttle"), "", "{}", policy);
    FAIL("expected BackendError");
  } catch (const BackendError& e) {
    CHECK(e.retryable());
    CHECK(std::string(e.what()).find("after 3 attempts") != std::string::npos);
  }
  CHECK(calls.load() == 3);
}

TEST_CASE("transport failures are retryable") {
  SlamServer server;
  const std::string url =
      "http://127.0.0.1:" + std::to_string(server.port) + "/x";
  RetryPolicy policy{1, kFastBackoffMs};
  try {
    http_post_json_with_retries(url, "", "{}", policy);
    FAIL("expected BackendError");
  } catch (const BackendError& e) {
    CHECK(e.retryable());
  }
}

TEST_CASE("urls without a scheme are rejected without retrying") {
  RetryPolicy policy{3, kFastBackoffMs};
  try {
    http_post_json_with_retries("localhost:8000/x", "", "{}", policy);
    FAIL("expected BackendError");
  } catch (const BackendError& e) {
    CHECK_FALSE(e.retryable());
    CHECK(std::string(e.what()).find("missing scheme") != std::string::npos);
  }
}

TEST_CASE("chat client shapes an OpenAI-style request") {
  LocalServer server;
  nlohmann::json seen_body;
  std::string seen_path;
  server.svr.Post("/v1/chat/completions",
                  [&](const httplib::Request& req, httplib::Response& res) {
                    seen_path = req.path;
                    seen_body = nlohmann::json::parse(req.body);
                    nlohmann::json reply = {
                        {"choices",
                         {{{"message", {{"role", "assistant"},
                                        {"content", "hello back"}}}}}}};
                    res.set_content(reply.dump(), "application/json");
                  });
  server.start();

  HttpChatClient client(server.url("/v1/"), "", RetryPolicy{0, kFastBackoffMs});
  ChatRequest request;
  request.system = "sys text";
  request.user = "user text";
  request.model = "model-x";
  request.temperature = 0.5;
  request.max_tokens = 99;
  CHECK(client.chat(request) == "hello back");
  CHECK(seen_path == "/v1/chat/completions");
  CHECK(seen_body["model"] == "model-x");
  CHECK(seen_body["temperature"] == 0.5);
  CHECK(seen_body["max_tokens"] == 99);
  REQUIRE(seen_body["messages"].size() == 2);
  CHECK(seen_body["messages"][0]["role"] == "system");
  CHECK(seen_body["messages"][0]["content"] == "sys text");
  CHECK(seen_body["messages"][1]["role"] == "user");
  CHECK(seen_body["messages"][1]["content"] == "user text");

  request.system.clear();
  CHECK(client.chat(request) == "hello back");
  REQUIRE(seen_body["messages"].size() == 1);
  CHECK(seen_body["messages"][0]["role"] == "user");

  request.user.clear();
  CHECK_THROWS_AS(client.chat(request), BackendError);
}

TEST_CASE("chat client rejects malformed completion payloads") {
  LocalServer server;
  std::string payload = "not json";
  server.svr.Post("/chat/completions", [&](const httplib::Request&,
                                           httplib::Response& res) {
    res.set_content(payload, "application/json");
  });
  server.start();

  HttpChatClient client(server.url(), "", RetryPolicy{0, kFastBackoffMs});
  ChatRequest request;
  request.user = "hi";

  for (const char* bad : {"not json", "{\"choices\":[]}",
                          "{\"choices\":[{\"message\":{}}]}",
                          "{\"choices\":[{\"message\":{\"content\":7}}]}"}) {
    payload = bad;
    try {
      client.chat(request);
      FAIL("expected BackendError for payload: " << bad);
    } catch (const BackendError& e) {
      CHECK_FALSE(e.retryable());
    }
  }
}

TEST_CASE("remote encoder normalizes returned vectors") {
  LocalServer server;
  nlohmann::json seen_body;
  std::atomic<int> calls{0};
  nlohmann::json payload = {{"data", {{{"embedding", {3.0, 4.0}}}}}};
  server.svr.Post("/embed", [&](const httplib::Request& req,
                                httplib::Response& res) {
    ++calls;
    seen_body = nlohmann::json::parse(req.body);
    res.set_content(payload.dump(), "application/json");
  });
  server.start();

  EncoderSpec spec;
  spec.kind = EncoderSpec::Kind::remote;
  spec.dimension = 2;
  spec.endpoint = server.url("/embed");
  spec.model_name = "embedder";
  spec.retries = 0;
  spec.backoff_base_ms = kFastBackoffMs;
  RemoteEncoder encoder(spec);

  const auto v = encoder.embed("hi");
  REQUIRE(v.size() == 2);
  CHECK(v[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(v[1] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(seen_body["model"] == "embedder");
  CHECK(seen_body["input"] == nlohmann::json::array({"hi"}));

  SUBCASE("count mismatch") {
    CHECK_THROWS_AS(encoder.embed_batch({"a", "b"}), EncoderError);
  }
  SUBCASE("dimension mismatch") {
    payload = {{"data", {{{"embedding", {1.0, 2.0, 3.0}}}}}};
    CHECK_THROWS_AS(encoder.embed("a"), EncoderError);
  }
  SUBCASE("missing data key") {
    payload = nlohmann::json::object();
    CHECK_THROWS_AS(encoder.embed("a"), EncoderError);
  }
  SUBCASE("empty batch and empty text never reach the network") {
    const int before = calls.load();
    CHECK(encoder.embed_batch({}).empty());
    CHECK_THROWS_AS(encoder.embed_batch({"ok", ""}), EncoderError);
    CHECK(calls.load() == before);
  }
}

TEST_CASE("remote encoder spec validation") {
  EncoderSpec spec;
  spec.kind = EncoderSpec::Kind::remote;
  spec.endpoint = "";
  CHECK_THROWS_AS(RemoteEncoder{spec}, EncoderError);

  spec.endpoint = "http://127.0.0.1:1/e";
  spec.dimension = 0;
  CHECK_THROWS_AS(RemoteEncoder{spec}, EncoderError);
}

}  // TEST_SUITE
