#pragma once

// Frame sources, transcript output, the external speech hook, and the
// streaming session loop behind the relay-client tool.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "relay/core.hpp"
#include "relay/wire.hpp"

namespace relay::client {

class SourceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reads a binary PGM (P5) or PPM (P6) file with maxval 255.
Frame read_pnm(const std::filesystem::path& path, std::uint32_t seq, std::uint64_t ts_us);

/// Yields frames with seq 1, 2, 3, ... and monotone capture timestamps.
class FrameSource {
public:
    virtual ~FrameSource() = default;
    /// nullopt when exhausted. Throws SourceError naming a bad file.
    std::optional<Frame> next();

protected:
    /// Pixels of the next frame; ts is filled in by next().
    virtual std::optional<Frame> produce(std::uint32_t seq, std::uint64_t ts_us) = 0;

private:
    std::uint32_t seq_ = 0;
    std::chrono::steady_clock::time_point epoch_ = std::chrono::steady_clock::now();
    std::uint64_t last_ts_ = 0;
};

/// dir:<path> | synthetic:bars | synthetic:text=<STRING> | synthetic:moving_box.
/// Directory sources repeat when loop is set; synthetic sources never end.
std::unique_ptr<FrameSource> make_source(const std::string& spec, bool loop = false);

inline constexpr std::uint32_t kSyntheticWidth = 320;
inline constexpr std::uint32_t kSyntheticHeight = 240;
inline constexpr std::uint32_t kMovingBoxSize = 16;
inline constexpr std::uint32_t kMovingBoxStride = 4;

/// "[seq=N][proc=ID][p=routine|interrupt] TEXT", or nullopt without a description.
std::optional<std::string> transcript_line(const wire::ResultMsg& result);

/// Runs a shell command per utterance with the text on its standard input.
/// ROUTINE utterances play one after another; an INTERRUPT kills whatever is
/// playing, drops the queue and plays at once. say() never blocks.
class TtsHook {
public:
    TtsHook(std::string command, std::ostream& warnings);
    ~TtsHook();

    TtsHook(const TtsHook&) = delete;
    TtsHook& operator=(const TtsHook&) = delete;

    void say(const std::string& text, Priority priority);

    /// Waits until queued utterances have finished or the timeout passes.
    void drain(std::chrono::milliseconds timeout);

    bool disabled() const noexcept { return disabled_.load(); }
    std::uint64_t launched() const noexcept { return launched_.load(); }

private:
    void run();
    bool launch(const std::string& text);
    void reap(bool kill_first);

    std::string command_;
    std::ostream& warnings_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::string> queue_;
    bool interrupt_pending_ = false;
    bool stop_ = false;
    int child_ = -1;  // pid of the running utterance
    std::atomic<bool> disabled_{false};
    std::atomic<std::uint64_t> launched_{0};
    std::thread worker_;
};

struct ClientOptions {
    std::string server = "127.0.0.1:7001";
    std::string source;
    double fps = 5.0;
    std::optional<std::string> processor;
    std::string options;
    bool loop = false;
    std::optional<std::string> tts_cmd;
    std::string name = "relay-client";
    double stats_interval_s = 0;  // 0 = only the final summary
    std::uint64_t max_frames = 0;  // 0 = until the source ends
    std::chrono::milliseconds trailing_wait{2000};
};

enum ExitCode : int {
    kExitOk = 0,
    kExitBadArgs = 2,
    kExitConnect = 3,
    kExitProtocol = 4,
    kExitDisconnected = 5,
};

struct SessionReport {
    int exit_code = kExitOk;
    std::uint32_t session_id = 0;
    std::uint64_t frames_sent = 0;
    std::uint32_t last_seq_sent = 0;
    std::chrono::steady_clock::duration send_duration{};
    std::vector<wire::ResultMsg> results;
    std::optional<wire::Stats> final_stats;
    std::optional<wire::SetProcessorAck> processor_ack;
};

/// Streams the source to the server until it ends (or stop is set), printing
/// transcript lines to out and diagnostics to err.
SessionReport run_session(const ClientOptions& options, std::ostream& out, std::ostream& err,
                          const std::atomic<bool>* stop = nullptr);

}  // namespace relay::client
