#pragma once

// Shared test helpers: independent oracles, random generators, test-only
// processors and a small harness for running a server in-process.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "relay/builtins.hpp"
#include "relay/core.hpp"
#include "relay/net.hpp"
#include "relay/processor.hpp"
#include "relay/server.hpp"
#include "relay/wire.hpp"

namespace relay::test {

using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;

// ---- oracles ---------------------------------------------------------------

/// FNV-1a written out from the published constants, byte by byte.
inline std::uint32_t fnv_oracle(const std::string& s) {
    std::uint64_t h = 0x811C9DC5ull;
    for (std::size_t i = 0; i < s.size(); ++i) {
        h = h ^ static_cast<std::uint8_t>(s[i]);
        h = (h * 0x01000193ull) % 4294967296ull;
    }
    return static_cast<std::uint32_t>(h);
}

inline std::string mock_text_oracle(const std::string& body) {
    return "mock description " + std::to_string(fnv_oracle(body) % 1000);
}

/// Thirds mapping as a plain if-chain; boundaries fall in the center band.
inline std::pair<std::string, std::string> thirds_oracle(double cx, double cy) {
    std::string h = "center", v = "middle";
    if (cx < 1.0 / 3.0) h = "left";
    if (cx > 2.0 / 3.0) h = "right";
    if (cy < 1.0 / 3.0) v = "top";
    if (cy > 2.0 / 3.0) v = "bottom";
    return {h, v};
}

inline double mad_oracle(const Bytes& a, const Bytes& b) {
    double sum = 0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += std::fabs(double(a[i]) - double(b[i]));
    return a.empty() ? 0.0 : sum / double(a.size());
}

/// Recursive 4-connected flood fill.
class BlobOracle {
public:
    static std::vector<Blob> run(const GrayImage& img, std::uint8_t threshold = 128) {
        BlobOracle o(img, threshold);
        return o.solve();
    }

private:
    BlobOracle(const GrayImage& img, std::uint8_t t) : img_(img), t_(t), seen_(img.width * img.height, false) {}

    bool fg(int x, int y) const {
        return x >= 0 && y >= 0 && x < int(img_.width) && y < int(img_.height) && img_.at(x, y) >= t_;
    }

    void fill(int x, int y, Blob& b) {
        if (!fg(x, y) || seen_[y * img_.width + x]) return;
        seen_[y * img_.width + x] = true;
        b.area += 1;
        b.bbox.x0 = std::min(b.bbox.x0, x);
        b.bbox.y0 = std::min(b.bbox.y0, y);
        b.bbox.x1 = std::max(b.bbox.x1, x);
        b.bbox.y1 = std::max(b.bbox.y1, y);
        fill(x + 1, y, b);
        fill(x - 1, y, b);
        fill(x, y + 1, b);
        fill(x, y - 1, b);
    }

    std::vector<Blob> solve() {
        std::vector<Blob> all;
        for (int y = 0; y < int(img_.height); ++y)
            for (int x = 0; x < int(img_.width); ++x)
                if (fg(x, y) && !seen_[y * img_.width + x]) {
                    Blob b{{x, y, x, y}, 0, std::uint32_t(all.size())};
                    fill(x, y, b);
                    all.push_back(b);
                }
        const auto min_area = static_cast<std::size_t>(std::ceil(0.001 * img_.width * img_.height));
        std::vector<Blob> kept;
        for (auto& b : all)
            if (b.area >= min_area) kept.push_back(b);
        // discovery order is raster order of each blob's first pixel
        std::stable_sort(kept.begin(), kept.end(), [](const Blob& a, const Blob& b) { return a.area > b.area; });
        if (kept.size() > 10) kept.resize(10);
        return kept;
    }

    const GrayImage& img_;
    std::uint8_t t_;
    std::vector<bool> seen_;
};

// ---- generators ------------------------------------------------------------

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    std::mt19937_64& rng() { return rng_; }

    std::uint64_t u(std::uint64_t lo, std::uint64_t hi) {
        return std::uniform_int_distribution<std::uint64_t>(lo, hi)(rng_);
    }
    bool coin() { return u(0, 1) == 1; }

    /// Valid UTF-8 mixing ASCII with 2-, 3- and 4-byte sequences.
    std::string text(std::size_t max_bytes, std::size_t min_bytes = 0) {
        static const char* pieces[] = {"\xC3\xA9", "\xE2\x82\xAC", "\xF0\x9F\x99\x82", "\xD0\x96"};
        std::string s;
        const auto target = u(min_bytes, max_bytes);
        while (s.size() < target) {
            if (u(0, 7) == 0) {
                std::string p = pieces[u(0, 3)];
                if (s.size() + p.size() > max_bytes) break;
                s += p;
            } else {
                s += static_cast<char>(u(0x20, 0x7E));
            }
        }
        while (s.size() < min_bytes) s += 'x';
        return s;
    }

    std::string processor_id() {
        static const char alphabet[] = "abcdefghijklmnopqrstuvwxyz0123456789_";
        std::string s(u(1, 20), 'a');
        for (auto& c : s) c = alphabet[u(0, sizeof alphabet - 2)];
        return s;
    }

    Annotation annotation() {
        Annotation a;
        a.kind = static_cast<AnnotationKind>(u(0, 3));
        a.label = text(24);
        a.confidence = static_cast<std::uint16_t>(u(0, kConfidenceScale));
        auto q = [&] { return static_cast<std::uint16_t>(u(0, 65535)); };
        switch (a.kind) {
            case AnnotationKind::Box: {
                auto x0 = q(), x1 = q(), y0 = q(), y1 = q();
                a.coords = {{std::min(x0, x1), std::min(y0, y1)}, {std::max(x0, x1), std::max(y0, y1)}};
                break;
            }
            case AnnotationKind::Polyline:
                for (auto n = u(2, 6); n > 0; --n) a.coords.push_back({q(), q()});
                break;
            default:
                a.coords = {{q(), q()}};
        }
        return a;
    }

    wire::Message message() {
        using namespace wire;
        switch (u(0, 16)) {
            case 0: return Hello{static_cast<std::uint8_t>(u(0, 255)), coin() ? Role::Console : Role::Source, text(40)};
            case 1: return HelloAck{static_cast<std::uint32_t>(u(0, UINT32_MAX)), static_cast<std::uint8_t>(u(0, 255))};
            case 2: return ListProcessors{};
            case 3: {
                ProcessorList m;
                for (auto n = u(0, 6); n > 0; --n)
                    m.entries.push_back({processor_id(), text(30), static_cast<std::uint8_t>(u(0, 1))});
                return m;
            }
            case 4: return SetProcessor{static_cast<std::uint32_t>(u(0, 9)), processor_id(), text(40)};
            case 5:
                return SetProcessorAck{static_cast<std::uint32_t>(u(0, 9)), processor_id(),
                                       static_cast<AckStatus>(u(0, 4))};
            case 6: {
                FrameMsg m;
                m.seq = static_cast<std::uint32_t>(u(0, UINT32_MAX));
                m.capture_ts_us = u(0, UINT64_MAX);
                m.width = static_cast<std::uint16_t>(u(1, 8));
                m.height = static_cast<std::uint16_t>(u(1, 8));
                m.format = static_cast<std::uint8_t>(u(0, 1));
                m.payload.resize(std::size_t{m.width} * m.height * (m.format ? 3 : 1));
                for (auto& b : m.payload) b = static_cast<std::uint8_t>(u(0, 255));
                return m;
            }
            case 7: {
                ResultMsg m;
                m.frame_seq = static_cast<std::uint32_t>(u(0, UINT32_MAX));
                m.processor_id = processor_id();
                m.timing = {static_cast<std::uint32_t>(u(0, UINT32_MAX)), static_cast<std::uint32_t>(u(0, UINT32_MAX))};
                for (auto n = u(0, 5); n > 0; --n) m.annotations.push_back(annotation());
                if (coin())
                    m.description = Speech{text(kMaxDescriptionBytes, 1), coin() ? Priority::Interrupt : Priority::Routine};
                return m;
            }
            case 8: return Error{static_cast<ErrorCode>(u(1, 6)), text(60)};
            case 9: {
                Ping p;
                for (auto& b : p.token) b = static_cast<std::uint8_t>(u(0, 255));
                return p;
            }
            case 10: {
                Pong p;
                for (auto& b : p.token) b = static_cast<std::uint8_t>(u(0, 255));
                return p;
            }
            case 11: return StatsRequest{static_cast<std::uint32_t>(u(0, UINT32_MAX))};
            case 12: return Stats{static_cast<std::uint32_t>(u(0, UINT32_MAX)), u(0, UINT64_MAX), u(0, UINT64_MAX),
                                  u(0, UINT64_MAX), u(0, UINT64_MAX)};
            case 13: return SessionListRequest{};
            case 14: {
                SessionList m;
                for (auto n = u(0, 5); n > 0; --n)
                    m.entries.push_back({static_cast<std::uint32_t>(u(1, 1000)), text(20), processor_id()});
                return m;
            }
            case 15: return Subscribe{static_cast<std::uint32_t>(u(0, UINT32_MAX))};
            default:
                return SubscribeAck{static_cast<std::uint32_t>(u(0, UINT32_MAX)),
                                    coin() ? AckStatus::Ok : AckStatus::NoSuchSession};
        }
    }

    /// Strings over A-Z, 0-9 and space, up to max_len characters.
    std::string glyph_string(std::size_t max_len) {
        static const char alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 ";
        std::string s(u(0, max_len), ' ');
        for (auto& c : s) c = alphabet[u(0, sizeof alphabet - 2)];
        return s;
    }

    GrayImage binary_image(std::uint32_t max_side) {
        GrayImage img(static_cast<std::uint32_t>(u(1, max_side)), static_cast<std::uint32_t>(u(1, max_side)));
        const auto density = u(5, 70);
        for (auto& p : img.pixels) p = u(0, 99) < density ? 255 : 0;
        return img;
    }

private:
    std::mt19937_64 rng_;
};

// ---- test processors -------------------------------------------------------

/// Sleeps a fixed time per frame and reports nothing.
class DelayProcessor final : public Processor {
public:
    explicit DelayProcessor(std::chrono::milliseconds d) : delay_(d) {}
    ProcessOutput process(const Frame&) override {
        std::this_thread::sleep_for(delay_);
        return {};
    }

private:
    std::chrono::milliseconds delay_;
};

/// Speaks the same text on every frame.
class SayProcessor final : public Processor {
public:
    SayProcessor(std::string text, Priority p) : text_(std::move(text)), priority_(p) {}
    ProcessOutput process(const Frame&) override { return {{}, Speech{text_, priority_}}; }

private:
    std::string text_;
    Priority priority_;
};

class ThrowingProcessor final : public Processor {
public:
    ProcessOutput process(const Frame&) override { throw std::runtime_error("boom"); }
};

/// Built-ins plus: slow (delay_ms, default 50), say (text, priority) and fail.
inline void register_test_processors(Registry& r) {
    r.add({"slow", "Fixed delay", false}, [](const ProcessorOptions& o) {
        return std::make_unique<DelayProcessor>(std::chrono::milliseconds(o.get_int("delay_ms", 50)));
    });
    r.add({"say", "Repeat text", false}, [](const ProcessorOptions& o) {
        const auto p = o.get("priority").value_or("routine");
        if (p != "routine" && p != "interrupt") throw BadOptions("priority must be routine or interrupt");
        return std::make_unique<SayProcessor>(o.get("text").value_or("hello"),
                                              p == "interrupt" ? Priority::Interrupt : Priority::Routine);
    });
    r.add({"fail", "Always throws", false}, [](const ProcessorOptions&) { return std::make_unique<ThrowingProcessor>(); });
}

/// A server on ephemeral ports with the built-ins and the test processors.
class TestServer {
public:
    explicit TestServer(ServerConfig config = {}, VlmConfig vlm = {}) {
        register_builtins(registry_, vlm);
        register_test_processors(registry_);
        registry_.finalize();
        config.tcp_port = 0;
        config.ws_port = 0;
        server_ = std::make_unique<RelayServer>(registry_, std::move(config));
        server_->start();
    }
    ~TestServer() { server_->stop(); }

    RelayServer& server() { return *server_; }
    std::uint16_t tcp_port() const { return server_->tcp_port(); }
    std::uint16_t ws_port() const { return server_->ws_port(); }
    std::string address() const { return "127.0.0.1:" + std::to_string(tcp_port()); }
    const Registry& registry() const { return registry_; }

private:
    Registry registry_;
    std::unique_ptr<RelayServer> server_;
};

// ---- raw protocol client ---------------------------------------------------

/// Blocking TCP peer with a typed "wait for" helper that keeps everything it
/// sees in arrival order.
class Peer {
public:
    explicit Peer(std::uint16_t port) : stream_(net::TcpStream::connect({"127.0.0.1", port})) {}

    void send(const wire::Message& m) { stream_.send(m); }
    net::TcpStream& stream() { return stream_; }

    std::uint32_t hello(wire::Role role = wire::Role::Source, const std::string& name = "test") {
        send(wire::Hello{wire::kProtocolVersion, role, name});
        return expect<wire::HelloAck>().session_id;
    }

    /// Next message of type T; other messages are kept in log().
    template <class T>
    T expect(std::chrono::milliseconds timeout = 5000ms) {
        const auto deadline = Clock::now() + timeout;
        while (Clock::now() < deadline) {
            auto m = stream_.receive(std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()) + 1ms);
            if (!m) continue;
            log_.push_back(*m);
            if (auto* v = std::get_if<T>(&*m)) return *v;
        }
        throw std::runtime_error("timed out waiting for message");
    }

    std::optional<wire::Message> next(std::chrono::milliseconds timeout = 5000ms) {
        auto m = stream_.receive(timeout);
        if (m) log_.push_back(*m);
        return m;
    }

    const std::vector<wire::Message>& log() const { return log_; }

private:
    net::TcpStream stream_;
    std::vector<wire::Message> log_;
};

inline Frame gray_frame(std::uint32_t seq, std::uint32_t w = 32, std::uint32_t h = 24, std::uint8_t fill = 0) {
    return Frame(seq, seq * 1000ull, w, h, PixelFormat::Gray8, Bytes(std::size_t{w} * h, fill));
}

inline double percentile(std::vector<double> v, double p) {
    if (v.empty()) return 0;
    std::sort(v.begin(), v.end());
    const auto idx = static_cast<std::size_t>(std::ceil(p * double(v.size()))) - 1;
    return v[std::min(idx, v.size() - 1)];
}

}  // namespace relay::test
