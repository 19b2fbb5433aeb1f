#include "relay/mock_inference.hpp"

#include <chrono>
#include <stdexcept>

#include <httplib.h>
#include <json.hpp>

namespace relay {

std::string mock_description(std::string_view request_body) {
    return "mock description " + std::to_string(fnv1a32(request_body) % 1000);
}

MockInferenceServer::MockInferenceServer(MockConfig config)
    : config_(std::move(config)), server_(std::make_unique<httplib::Server>()) {
    if (config_.latency_ms < 0) throw std::invalid_argument("latency must be non-negative");
    if (config_.fail_every < 0) throw std::invalid_argument("fail-every must be non-negative");

    server_->Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
        const auto n = requests_.fetch_add(1) + 1;
        {
            std::lock_guard lock(mu_);
            bodies_.push_back(req.body);
        }
        if (config_.latency_ms > 0) {
            std::unique_lock lock(mu_);
            stop_cv_.wait_for(lock, std::chrono::milliseconds(config_.latency_ms), [this] { return stopping_; });
        }
        if (config_.fail_every > 0 && n % static_cast<std::uint64_t>(config_.fail_every) == 0) {
            res.status = 500;
            res.set_content(R"({"error":"mock failure"})", "application/json");
            return;
        }
        nlohmann::json reply = {{"choices", {{{"message", {{"content", mock_description(req.body)}}}}}}};
        res.set_content(reply.dump(), "application/json");
    });
}

MockInferenceServer::~MockInferenceServer() { stop(); }

int MockInferenceServer::bind() {
    if (config_.port == 0) {
        port_ = server_->bind_to_any_port(config_.host);
        if (port_ < 0) throw std::runtime_error("cannot bind " + config_.host);
    } else {
        if (!server_->bind_to_port(config_.host, config_.port))
            throw std::runtime_error("cannot bind " + config_.host + ":" + std::to_string(config_.port));
        port_ = config_.port;
    }
    return port_;
}

int MockInferenceServer::start() {
    bind();
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void MockInferenceServer::run() {
    bind();
    server_->listen_after_bind();
}

void MockInferenceServer::stop() {
    {
        std::lock_guard lock(mu_);
        stopping_ = true;
    }
    stop_cv_.notify_all();
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

std::string MockInferenceServer::base_url() const {
    return "http://" + config_.host + ":" + std::to_string(port_);
}

std::vector<std::string> MockInferenceServer::captured_bodies() const {
    std::lock_guard lock(mu_);
    return bodies_;
}

}  // namespace relay
