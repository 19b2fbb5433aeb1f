// relay-server: frame relay service over raw TCP and WebSocket.

#include <csignal>
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "relay/builtins.hpp"
#include "relay/net.hpp"
#include "relay/server.hpp"

namespace {

std::string env_or(const char* name, std::string fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

}  // namespace

int main(int argc, char** argv) {
    std::string tcp_listen = "127.0.0.1:7001";
    std::string ws_listen = "127.0.0.1:7002";
    relay::VlmConfig vlm;
    vlm.endpoint = env_or("RELAY_VLM_ENDPOINT", "");
    vlm.model = env_or("RELAY_VLM_MODEL", vlm.model);
    vlm.bearer_token = env_or("RELAY_VLM_TOKEN", "");
    std::string timeout_env = env_or("RELAY_VLM_TIMEOUT_MS", "");
    std::string default_processor = "scene_change";
    long dedup_ms = 5000;
    std::string log_level = "info";
    std::optional<int> timeout_flag;

    CLI::App app{"Frame relay server"};
    app.add_option("--tcp-listen", tcp_listen, "HOST:PORT for length-prefixed TCP")->capture_default_str();
    app.add_option("--ws-listen", ws_listen, "HOST:PORT for WebSocket")->capture_default_str();
    app.add_option("--vlm-endpoint", vlm.endpoint, "Base URL of the chat-completions service");
    app.add_option("--vlm-model", vlm.model, "Model name sent to the service")->capture_default_str();
    app.add_option("--vlm-timeout-ms", timeout_flag, "Service timeout in milliseconds");
    app.add_option("--default-processor", default_processor, "Processor for new sessions")->capture_default_str();
    app.add_option("--dedup-ms", dedup_ms, "Repeated-speech window")->capture_default_str();
    app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")->capture_default_str();
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    relay::ServerConfig config;
    try {
        if (timeout_flag) {
            vlm.timeout_ms = *timeout_flag;
        } else if (!timeout_env.empty()) {
            vlm.timeout_ms = std::stoi(timeout_env);
        }
        const auto level = spdlog::level::from_str(log_level);
        if (level == spdlog::level::off && log_level != "off") throw std::invalid_argument("unknown log level " + log_level);
        spdlog::set_level(level);
        auto tcp = relay::net::parse_host_port(tcp_listen);
        auto ws = relay::net::parse_host_port(ws_listen);
        config.tcp_host = tcp.host;
        config.tcp_port = tcp.port;
        config.ws_host = ws.host;
        config.ws_port = ws.port;
        if (dedup_ms < 0) throw std::invalid_argument("--dedup-ms must be non-negative");
        config.dedup_window = std::chrono::milliseconds(dedup_ms);
        config.default_processor = default_processor;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    relay::Registry registry;
    relay::register_builtins(registry, vlm);
    registry.finalize();

    // Block termination signals before any thread starts so sigwait sees them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    std::optional<relay::RelayServer> server;
    try {
        server.emplace(registry, config);
        server->start();
    } catch (const relay::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const relay::BindError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }

    int sig = 0;
    sigwait(&signals, &sig);
    spdlog::info("shutting down");
    server->stop();
    return 0;
}
