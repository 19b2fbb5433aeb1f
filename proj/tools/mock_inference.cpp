// mock-inference: deterministic chat-completions stand-in.

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "relay/mock_inference.hpp"
#include "relay/net.hpp"

int main(int argc, char** argv) {
    std::string listen = "127.0.0.1:7010";
    std::optional<int> latency_ms;
    int fail_every = 0;

    CLI::App app{"Deterministic image description mock"};
    app.add_option("--listen", listen, "HOST:PORT")->capture_default_str();
    app.add_option("--latency-ms", latency_ms, "Delay before each response (env MOCK_LATENCY_MS)")->check(CLI::NonNegativeNumber);
    app.add_option("--fail-every", fail_every, "Answer 500 to every Nth request")->check(CLI::NonNegativeNumber);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    relay::MockConfig config;
    try {
        auto where = relay::net::parse_host_port(listen);
        config.host = where.host;
        config.port = where.port;
        if (latency_ms) {
            config.latency_ms = *latency_ms;
        } else if (const char* env = std::getenv("MOCK_LATENCY_MS"); env && *env) {
            config.latency_ms = std::stoi(env);
            if (config.latency_ms < 0) throw std::invalid_argument("MOCK_LATENCY_MS must be non-negative");
        }
        config.fail_every = fail_every;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    relay::MockInferenceServer server(config);
    try {
        server.start();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    std::cerr << "mock-inference listening on " << server.base_url() << "\n";
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
    return 0;
}
