#pragma once

// Per-session dispatch: a capacity-1 latest-frame-wins mailbox feeding one
// processor instance, with hot switching between processors.

#include <chrono>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "relay/core.hpp"
#include "relay/processor.hpp"

namespace relay {

using SteadyClock = std::chrono::steady_clock;

struct PendingFrame {
    Frame frame;
    SteadyClock::time_point enqueued;
};

/// Holds at most one frame. A newer frame replaces an unprocessed older one.
class Mailbox {
public:
    /// Returns true when a pending frame was discarded.
    bool submit(Frame f, SteadyClock::time_point now = SteadyClock::now());

    std::optional<PendingFrame> take();

    /// Blocks until a frame is available, close() is called, or the timeout
    /// passes.
    std::optional<PendingFrame> wait_take(std::chrono::milliseconds timeout);

    void close();
    bool empty() const;
    std::uint64_t replaced_count() const;

private:
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::optional<PendingFrame> slot_;
    std::uint64_t replaced_ = 0;
    bool closed_ = false;
};

enum class SwitchStatus { Ok, UnknownId, BadOptions };

struct DispatchOutcome {
    ProcessResult result;
    bool failed = false;  // the processor threw; result carries the error description
    std::string error;
};

/// The processor side of one source session. submit() may race with
/// dispatch_once(); dispatch_once() itself must only be called from the
/// session's single dispatcher.
class Pipeline {
public:
    /// Throws std::invalid_argument when the initial processor cannot be created.
    Pipeline(const Registry& registry, std::string processor_id, std::string options = {});

    bool submit(Frame f) { return mailbox_.submit(std::move(f)); }
    Mailbox& mailbox() noexcept { return mailbox_; }

    /// Takes the pending frame, if any, and runs the current processor on it.
    std::optional<DispatchOutcome> dispatch_once();

    /// Like dispatch_once() but waits up to timeout for a frame.
    std::optional<DispatchOutcome> dispatch_wait(std::chrono::milliseconds timeout);

    /// Replaces the processor instance. on_ok runs while the switch is still
    /// exclusive, so anything it sends is ordered before the first result of
    /// the new instance. A failed switch leaves the current processor intact.
    SwitchStatus switch_processor(const std::string& id, const std::string& options,
                                  const std::function<void()>& on_ok = {});

    std::string current_id() const;
    std::string current_options() const;

private:
    std::optional<DispatchOutcome> run(PendingFrame pending);

    const Registry& registry_;
    Mailbox mailbox_;
    mutable std::mutex mu_;
    std::string id_;
    std::string options_;
    std::shared_ptr<Processor> instance_;
    std::uint64_t generation_ = 0;
};

}  // namespace relay
