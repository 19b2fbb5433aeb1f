#pragma once

// Processor contract and the startup-time registry of processors.

#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "relay/core.hpp"

namespace relay {

/// [a-z0-9_]{1,64}
bool is_valid_processor_id(std::string_view id) noexcept;

struct ProcessorDescriptor {
    std::string id;
    std::string display_name;
    bool remote = false;  // performs network calls
    bool operator==(const ProcessorDescriptor&) const = default;
};

/// A processor rejected an option value, or the option text does not parse.
class BadOptions : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parsed "k=v;k=v" option text. Duplicate keys keep the last value.
///
/// Processors read keys through get(), which marks them as recognized; the
/// registry counts whatever was never read as an ignored option.
class ProcessorOptions {
public:
    ProcessorOptions() = default;

    /// Throws BadOptions on a segment without '=' or a key outside [a-z_]{1,32}.
    static ProcessorOptions parse(std::string_view text);

    std::optional<std::string> get(std::string_view key) const;
    double get_real(std::string_view key, double fallback) const;
    int get_int(std::string_view key, int fallback) const;

    const std::vector<std::pair<std::string, std::string>>& pairs() const noexcept { return pairs_; }
    std::vector<std::string> unread_keys() const;

private:
    std::vector<std::pair<std::string, std::string>> pairs_;
    mutable std::set<std::string, std::less<>> read_;
};

/// What a processor hands back for one frame. The dispatcher stamps the
/// sequence number, processor id and timing.
struct ProcessOutput {
    std::vector<Annotation> annotations;
    std::optional<Speech> speech;
};

/// Base class for everything that consumes frames. An instance belongs to one
/// session and is only ever called from that session's dispatcher.
class Processor {
public:
    virtual ~Processor() = default;
    virtual ProcessOutput process(const Frame& frame) = 0;
};

using ProcessorFactory = std::function<std::unique_ptr<Processor>(const ProcessorOptions&)>;

enum class CreateStatus { Ok, UnknownId, BadOptions };

struct Created {
    CreateStatus status = CreateStatus::Ok;
    std::unique_ptr<Processor> instance;
    std::string error;
};

class RegistryError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Processors known to a server run. Entries are added during startup, then
/// finalize() freezes the registry and it is read concurrently without locks.
class Registry {
public:
    /// Throws RegistryError on a duplicate or malformed id, or after finalize().
    void add(ProcessorDescriptor desc, ProcessorFactory factory);
    void finalize() noexcept { finalized_ = true; }
    bool finalized() const noexcept { return finalized_; }

    /// Registration order.
    std::vector<ProcessorDescriptor> list() const;
    const ProcessorDescriptor* find(std::string_view id) const noexcept;

    /// A fresh instance configured from option text. Throws RegistryError
    /// before finalize().
    Created create(std::string_view id, std::string_view options) const;

    std::uint64_t ignored_option_count() const noexcept { return ignored_options_.load(); }

private:
    struct Entry {
        ProcessorDescriptor desc;
        ProcessorFactory factory;
    };
    std::vector<Entry> entries_;
    bool finalized_ = false;
    mutable std::atomic<std::uint64_t> ignored_options_{0};
};

}  // namespace relay
