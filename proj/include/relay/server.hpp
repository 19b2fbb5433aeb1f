#pragma once

// The relay server: accepts source and console connections over raw TCP and
// WebSocket, runs one dispatcher per source session, filters repeated speech
// and mirrors results to subscribed consoles.

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "relay/core.hpp"
#include "relay/dispatch.hpp"
#include "relay/processor.hpp"
#include "relay/wire.hpp"

namespace relay {

/// Suppresses a ROUTINE description whose text equals the last spoken one
/// within the window. INTERRUPT descriptions always pass.
struct DedupPolicy {
    std::chrono::milliseconds window{5000};
    std::optional<std::string> last_text;
    SteadyClock::time_point last_emit{};
};

/// True when the description should be spoken; updates the policy on pass.
bool dedup_filter(const Description& d, DedupPolicy& policy, SteadyClock::time_point now);

struct ServerConfig {
    std::string tcp_host = "127.0.0.1";
    std::uint16_t tcp_port = 7001;  // 0 picks a free port
    std::string ws_host = "127.0.0.1";
    std::uint16_t ws_port = 7002;
    bool enable_ws = true;
    std::string default_processor = "scene_change";
    std::string default_options;
    std::chrono::milliseconds dedup_window{5000};
    /// Time source for the dedup window; steady_clock when empty.
    std::function<SteadyClock::time_point()> dedup_clock;
    int io_threads = 2;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BindError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class RelayServer {
public:
    /// The registry must be finalized and outlive the server. Throws
    /// ConfigError for an unusable configuration.
    RelayServer(const Registry& registry, ServerConfig config);
    ~RelayServer();

    RelayServer(const RelayServer&) = delete;
    RelayServer& operator=(const RelayServer&) = delete;

    /// Binds the listeners and starts serving on background threads.
    /// Throws BindError.
    void start();

    /// Closes every connection, stops dispatchers and joins all threads.
    void stop();

    std::uint16_t tcp_port() const noexcept;
    std::uint16_t ws_port() const noexcept;

    /// Counter snapshot of a live session.
    std::optional<wire::Stats> stats(std::uint32_t session_id) const;

    class Impl;

private:
    std::unique_ptr<Impl> impl_;
};

}  // namespace relay
