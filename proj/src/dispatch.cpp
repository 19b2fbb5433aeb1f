#include "relay/dispatch.hpp"

#include <stdexcept>

namespace relay {

bool Mailbox::submit(Frame f, SteadyClock::time_point now) {
    bool replaced = false;
    {
        std::lock_guard lock(mu_);
        replaced = slot_.has_value();
        if (replaced) ++replaced_;
        slot_.emplace(PendingFrame{std::move(f), now});
    }
    cv_.notify_one();
    return replaced;
}

std::optional<PendingFrame> Mailbox::take() {
    std::lock_guard lock(mu_);
    std::optional<PendingFrame> out;
    out.swap(slot_);
    return out;
}

std::optional<PendingFrame> Mailbox::wait_take(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return slot_.has_value() || closed_; });
    std::optional<PendingFrame> out;
    out.swap(slot_);
    return out;
}

void Mailbox::close() {
    {
        std::lock_guard lock(mu_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool Mailbox::empty() const {
    std::lock_guard lock(mu_);
    return !slot_.has_value();
}

std::uint64_t Mailbox::replaced_count() const {
    std::lock_guard lock(mu_);
    return replaced_;
}

Pipeline::Pipeline(const Registry& registry, std::string processor_id, std::string options)
    : registry_(registry), id_(std::move(processor_id)), options_(std::move(options)) {
    auto created = registry_.create(id_, options_);
    if (created.status != CreateStatus::Ok)
        throw std::invalid_argument("cannot create processor " + id_ + ": " + created.error);
    instance_ = std::move(created.instance);
}

std::optional<DispatchOutcome> Pipeline::dispatch_once() {
    auto pending = mailbox_.take();
    if (!pending) return std::nullopt;
    return run(std::move(*pending));
}

std::optional<DispatchOutcome> Pipeline::dispatch_wait(std::chrono::milliseconds timeout) {
    auto pending = mailbox_.wait_take(timeout);
    if (!pending) return std::nullopt;
    return run(std::move(*pending));
}

namespace {

std::string output_problem(const ProcessOutput& out) {
    if (out.annotations.size() > kMaxAnnotations) return "more than 256 annotations";
    for (const auto& a : out.annotations)
        if (auto p = annotation_problem(a); !p.empty()) return p;
    if (out.speech && (out.speech->text.empty() || out.speech->text.size() > kMaxDescriptionBytes))
        return "description text must be 1..1024 bytes";
    return {};
}

}  // namespace

std::optional<DispatchOutcome> Pipeline::run(PendingFrame pending) {
    std::shared_ptr<Processor> instance;
    std::string id;
    std::uint64_t generation;
    {
        std::lock_guard lock(mu_);
        instance = instance_;
        id = id_;
        generation = generation_;
    }

    const auto start = SteadyClock::now();
    DispatchOutcome outcome;
    auto& result = outcome.result;
    result.frame_seq = pending.frame.seq();
    result.processor = id;
    result.timing.recv_to_dispatch_us = saturating_us(start - pending.enqueued);

    try {
        auto out = instance->process(pending.frame);
        if (auto p = output_problem(out); !p.empty()) throw std::runtime_error("invalid output: " + p);
        result.annotations = std::move(out.annotations);
        if (out.speech)
            result.description = Description{std::move(out.speech->text), out.speech->priority, id,
                                             pending.frame.seq()};
    } catch (const std::exception& e) {
        outcome.failed = true;
        outcome.error = e.what();
    } catch (...) {
        outcome.failed = true;
        outcome.error = "unknown exception";
    }
    result.timing.process_us = saturating_us(SteadyClock::now() - start);

    if (outcome.failed) {
        result.annotations.clear();
        result.description =
            Description{"processor error: " + id, Priority::Interrupt, id, pending.frame.seq()};
        instance.reset();
        std::lock_guard lock(mu_);
        // a switch during the failed call already installed a fresh instance
        if (generation_ == generation) {
            auto created = registry_.create(id_, options_);
            if (created.status == CreateStatus::Ok) {
                instance_ = std::move(created.instance);
                ++generation_;
            }
        }
    }
    return outcome;
}

SwitchStatus Pipeline::switch_processor(const std::string& id, const std::string& options,
                                        const std::function<void()>& on_ok) {
    auto created = registry_.create(id, options);
    if (created.status == CreateStatus::UnknownId) return SwitchStatus::UnknownId;
    if (created.status == CreateStatus::BadOptions) return SwitchStatus::BadOptions;
    std::lock_guard lock(mu_);
    instance_ = std::move(created.instance);
    id_ = id;
    options_ = options;
    ++generation_;
    if (on_ok) on_ok();
    return SwitchStatus::Ok;
}

std::string Pipeline::current_id() const {
    std::lock_guard lock(mu_);
    return id_;
}

std::string Pipeline::current_options() const {
    std::lock_guard lock(mu_);
    return options_;
}

}  // namespace relay
