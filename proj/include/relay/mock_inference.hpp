#pragma once

// Deterministic offline stand-in for a chat-completions image description
// endpoint. The reply content is derived from a hash of the raw request body.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace relay {

/// FNV-1a, 32-bit.
constexpr std::uint32_t fnv1a32(std::string_view bytes) noexcept {
    std::uint32_t h = 2166136261u;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 16777619u;
    }
    return h;
}

/// "mock description <fnv1a32(body) mod 1000>"
std::string mock_description(std::string_view request_body);

struct MockConfig {
    std::string host = "127.0.0.1";
    int port = 7010;  // 0 picks a free port
    int latency_ms = 0;
    int fail_every = 0;  // every Nth request answers 500; 0 = never
};

class MockInferenceServer {
public:
    explicit MockInferenceServer(MockConfig config);
    ~MockInferenceServer();

    MockInferenceServer(const MockInferenceServer&) = delete;
    MockInferenceServer& operator=(const MockInferenceServer&) = delete;

    /// Binds and serves on a background thread. Returns the bound port.
    /// Throws std::runtime_error when the address cannot be bound.
    int start();

    /// Binds and serves on the calling thread until stop().
    void run();

    void stop();

    int port() const noexcept { return port_; }
    std::string base_url() const;
    std::uint64_t request_count() const noexcept { return requests_.load(); }

    /// Raw bodies of every completion request received so far.
    std::vector<std::string> captured_bodies() const;

private:
    int bind();

    MockConfig config_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<std::uint64_t> requests_{0};
    mutable std::mutex mu_;
    std::vector<std::string> bodies_;
    std::condition_variable stop_cv_;
    bool stopping_ = false;
};

}  // namespace relay
