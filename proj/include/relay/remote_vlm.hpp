#pragma once

// Client for a chat-completions style image description service.

#include <atomic>
#include <cstdint>
#include <string>
#include <string_view>

#include "relay/core.hpp"
#include "relay/processor.hpp"

namespace relay {

inline constexpr std::string_view kDefaultVlmPrompt =
    "Describe this scene for a blind user in one sentence.";
inline constexpr std::string_view kVlmUnavailable = "description service unavailable";

struct VlmConfig {
    std::string endpoint;  // e.g. http://127.0.0.1:7010
    std::string model = "mock-vlm";
    std::string prompt = std::string(kDefaultVlmPrompt);
    int timeout_ms = 10000;
    std::string bearer_token;  // sent as Authorization when non-empty
};

/// Binary PPM (P6, maxval 255). GRAY8 frames are expanded to RGB.
Bytes encode_ppm(const Frame& frame);

std::string base64_encode(ByteView data);

/// Request body JSON for one frame.
std::string vlm_request_body(const Frame& frame, std::string_view model, std::string_view prompt);

class RemoteVlmProcessor : public Processor {
public:
    /// Throws BadOptions when the endpoint is empty or timeout_ms < 100.
    explicit RemoteVlmProcessor(VlmConfig config);
    ProcessOutput process(const Frame& frame) override;

    const VlmConfig& config() const noexcept { return config_; }

    /// Process-wide count of failed service calls.
    static std::uint64_t failure_count() noexcept;

private:
    VlmConfig config_;
};

}  // namespace relay
