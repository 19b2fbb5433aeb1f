#include "relay/remote_vlm.hpp"

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

namespace relay {

namespace {
std::atomic<std::uint64_t> g_failures{0};
}

Bytes encode_ppm(const Frame& frame) {
    const auto header = "P6\n" + std::to_string(frame.width()) + " " + std::to_string(frame.height()) + "\n255\n";
    Bytes out(header.begin(), header.end());
    auto px = frame.pixels();
    if (frame.format() == PixelFormat::Rgb8) {
        out.insert(out.end(), px.begin(), px.end());
    } else {
        out.reserve(out.size() + px.size() * 3);
        for (auto v : px) out.insert(out.end(), {v, v, v});
    }
    return out;
}

std::string base64_encode(ByteView data) {
    static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((data.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= data.size(); i += 3) {
        const std::uint32_t v = data[i] << 16 | data[i + 1] << 8 | data[i + 2];
        out += kAlphabet[v >> 18 & 63];
        out += kAlphabet[v >> 12 & 63];
        out += kAlphabet[v >> 6 & 63];
        out += kAlphabet[v & 63];
    }
    if (const auto rest = data.size() - i; rest > 0) {
        std::uint32_t v = data[i] << 16;
        if (rest == 2) v |= data[i + 1] << 8;
        out += kAlphabet[v >> 18 & 63];
        out += kAlphabet[v >> 12 & 63];
        out += rest == 2 ? kAlphabet[v >> 6 & 63] : '=';
        out += '=';
    }
    return out;
}

std::string vlm_request_body(const Frame& frame, std::string_view model, std::string_view prompt) {
    using nlohmann::json;
    const auto url = "data:image/x-portable-pixmap;base64," + base64_encode(encode_ppm(frame));
    json body = {
        {"model", model},
        {"messages",
         json::array({{{"role", "user"},
                       {"content", json::array({{{"type", "text"}, {"text", prompt}},
                                                {{"type", "image_url"}, {"image_url", {{"url", url}}}}})}}})},
    };
    return body.dump();
}

RemoteVlmProcessor::RemoteVlmProcessor(VlmConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw BadOptions("remote_vlm needs a service endpoint");
    if (config_.timeout_ms < 100) throw BadOptions("remote_vlm timeout must be at least 100 ms");
    while (!config_.endpoint.empty() && config_.endpoint.back() == '/') config_.endpoint.pop_back();
}

std::uint64_t RemoteVlmProcessor::failure_count() noexcept { return g_failures.load(); }

ProcessOutput RemoteVlmProcessor::process(const Frame& frame) {
    auto fail = [&](const std::string& why) {
        g_failures.fetch_add(1);
        spdlog::warn("remote_vlm: {}", why);
        return ProcessOutput{{}, Speech{std::string(kVlmUnavailable), Priority::Interrupt}};
    };

    const auto body = vlm_request_body(frame, config_.model, config_.prompt);
    httplib::Client client(config_.endpoint);
    if (!client.is_valid()) return fail("invalid endpoint " + config_.endpoint);
    const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    if (!config_.bearer_token.empty()) headers.emplace("Authorization", "Bearer " + config_.bearer_token);

    auto res = client.Post("/v1/chat/completions", headers, body, "application/json");
    if (!res) return fail("request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) return fail("service answered " + std::to_string(res->status));

    std::string content;
    try {
        auto j = nlohmann::json::parse(res->body);
        content = j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const std::exception& e) {
        return fail(std::string("unreadable response: ") + e.what());
    }
    ProcessOutput out;
    if (!content.empty() && is_valid_utf8(content))
        out.speech = Speech{truncate_utf8(content, kMaxDescriptionBytes), Priority::Routine};
    return out;
}

}  // namespace relay
