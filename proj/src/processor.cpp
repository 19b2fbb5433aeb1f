#include "relay/processor.hpp"

#include <charconv>
#include <cmath>

#include <spdlog/spdlog.h>

namespace relay {

bool is_valid_processor_id(std::string_view id) noexcept {
    if (id.empty() || id.size() > 64) return false;
    for (char c : id)
        if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_')) return false;
    return true;
}

namespace {

bool is_valid_option_key(std::string_view k) noexcept {
    if (k.empty() || k.size() > 32) return false;
    for (char c : k)
        if (!((c >= 'a' && c <= 'z') || c == '_')) return false;
    return true;
}

}  // namespace

ProcessorOptions ProcessorOptions::parse(std::string_view text) {
    ProcessorOptions out;
    while (!text.empty()) {
        auto semi = text.find(';');
        auto seg = text.substr(0, semi);
        text = semi == std::string_view::npos ? std::string_view{} : text.substr(semi + 1);
        if (seg.empty()) continue;
        auto eq = seg.find('=');
        if (eq == std::string_view::npos) throw BadOptions("option without '=': " + std::string(seg));
        auto key = seg.substr(0, eq);
        if (!is_valid_option_key(key)) throw BadOptions("invalid option key: " + std::string(key));
        auto value = std::string(seg.substr(eq + 1));
        bool replaced = false;
        for (auto& [k, v] : out.pairs_)
            if (k == key) {
                v = value;
                replaced = true;
            }
        if (!replaced) out.pairs_.emplace_back(std::string(key), std::move(value));
    }
    return out;
}

std::optional<std::string> ProcessorOptions::get(std::string_view key) const {
    for (const auto& [k, v] : pairs_)
        if (k == key) {
            read_.insert(k);
            return v;
        }
    return std::nullopt;
}

double ProcessorOptions::get_real(std::string_view key, double fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    double out = 0;
    auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc{} || p != v->data() + v->size() || !std::isfinite(out))
        throw BadOptions(std::string(key) + " must be a number");
    return out;
}

static int get_int_impl(const std::string& v, std::string_view key) {
    int out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) throw BadOptions(std::string(key) + " must be an integer");
    return out;
}

int ProcessorOptions::get_int(std::string_view key, int fallback) const {
    auto v = get(key);
    return v ? get_int_impl(*v, key) : fallback;
}

std::vector<std::string> ProcessorOptions::unread_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : pairs_)
        if (!read_.contains(k)) out.push_back(k);
    return out;
}

void Registry::add(ProcessorDescriptor desc, ProcessorFactory factory) {
    if (finalized_) throw RegistryError("registration after startup: " + desc.id);
    if (!is_valid_processor_id(desc.id)) throw RegistryError("invalid processor id: " + desc.id);
    if (desc.display_name.empty()) throw RegistryError("empty display name for " + desc.id);
    if (!factory) throw RegistryError("missing factory for " + desc.id);
    if (find(desc.id)) throw RegistryError("duplicate processor id: " + desc.id);
    entries_.push_back({std::move(desc), std::move(factory)});
}

std::vector<ProcessorDescriptor> Registry::list() const {
    std::vector<ProcessorDescriptor> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.desc);
    return out;
}

const ProcessorDescriptor* Registry::find(std::string_view id) const noexcept {
    for (const auto& e : entries_)
        if (e.desc.id == id) return &e.desc;
    return nullptr;
}

Created Registry::create(std::string_view id, std::string_view options) const {
    if (!finalized_) throw RegistryError("registry used before startup finished");
    const Entry* entry = nullptr;
    for (const auto& e : entries_)
        if (e.desc.id == id) entry = &e;
    if (!entry) return {CreateStatus::UnknownId, nullptr, "unknown processor " + std::string(id)};
    try {
        auto opts = ProcessorOptions::parse(options);
        auto instance = entry->factory(opts);
        for (const auto& k : opts.unread_keys()) {
            ignored_options_.fetch_add(1);
            spdlog::warn("processor {}: ignoring unrecognized option '{}'", id, k);
        }
        return {CreateStatus::Ok, std::move(instance), {}};
    } catch (const BadOptions& e) {
        return {CreateStatus::BadOptions, nullptr, e.what()};
    }
}

}  // namespace relay
