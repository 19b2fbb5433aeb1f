#include "relay/wire.hpp"

#include <algorithm>
#include <cstdio>
#include <type_traits>

namespace relay::wire {

std::string_view to_string(AckStatus s) noexcept {
    switch (s) {
        case AckStatus::Ok: return "ok";
        case AckStatus::UnknownId: return "unknown processor";
        case AckStatus::BadOptions: return "bad options";
        case AckStatus::NoSuchSession: return "no such session";
        case AckStatus::NotPermitted: return "not permitted";
    }
    return "?";
}

std::string_view to_string(MessageType t) noexcept {
    switch (t) {
        case MessageType::Hello: return "HELLO";
        case MessageType::HelloAck: return "HELLO_ACK";
        case MessageType::ListProcessors: return "LIST_PROCESSORS";
        case MessageType::ProcessorList: return "PROCESSOR_LIST";
        case MessageType::SetProcessor: return "SET_PROCESSOR";
        case MessageType::SetProcessorAck: return "SET_PROCESSOR_ACK";
        case MessageType::Frame: return "FRAME";
        case MessageType::Result: return "RESULT";
        case MessageType::Error: return "ERROR";
        case MessageType::Ping: return "PING";
        case MessageType::Pong: return "PONG";
        case MessageType::StatsRequest: return "STATS_REQUEST";
        case MessageType::Stats: return "STATS";
        case MessageType::SessionListRequest: return "SESSION_LIST_REQUEST";
        case MessageType::SessionList: return "SESSION_LIST";
        case MessageType::Subscribe: return "SUBSCRIBE";
        case MessageType::SubscribeAck: return "SUBSCRIBE_ACK";
    }
    return "?";
}

FrameMsg FrameMsg::from(const Frame& f) {
    auto px = f.pixels();
    return FrameMsg{f.seq(), f.capture_ts_us(), static_cast<std::uint16_t>(f.width()),
                    static_cast<std::uint16_t>(f.height()), static_cast<std::uint8_t>(f.format()),
                    Bytes(px.begin(), px.end())};
}

Frame FrameMsg::to_frame() const {
    auto fmt = pixel_format_from_code(format);
    if (!fmt) throw ContractViolation("invalid frame: format");
    return Frame(seq, capture_ts_us, width, height, *fmt, payload);
}

ResultMsg ResultMsg::from(const ProcessResult& r) {
    ResultMsg m{r.frame_seq, r.processor, r.timing, r.annotations, std::nullopt};
    if (r.description) m.description = Speech{r.description->text, r.description->priority};
    return m;
}

namespace {

template <class T>
struct TypeTag;
template <> struct TypeTag<Hello> { static constexpr auto value = MessageType::Hello; };
template <> struct TypeTag<HelloAck> { static constexpr auto value = MessageType::HelloAck; };
template <> struct TypeTag<ListProcessors> { static constexpr auto value = MessageType::ListProcessors; };
template <> struct TypeTag<ProcessorList> { static constexpr auto value = MessageType::ProcessorList; };
template <> struct TypeTag<SetProcessor> { static constexpr auto value = MessageType::SetProcessor; };
template <> struct TypeTag<SetProcessorAck> { static constexpr auto value = MessageType::SetProcessorAck; };
template <> struct TypeTag<FrameMsg> { static constexpr auto value = MessageType::Frame; };
template <> struct TypeTag<ResultMsg> { static constexpr auto value = MessageType::Result; };
template <> struct TypeTag<Error> { static constexpr auto value = MessageType::Error; };
template <> struct TypeTag<Ping> { static constexpr auto value = MessageType::Ping; };
template <> struct TypeTag<Pong> { static constexpr auto value = MessageType::Pong; };
template <> struct TypeTag<StatsRequest> { static constexpr auto value = MessageType::StatsRequest; };
template <> struct TypeTag<Stats> { static constexpr auto value = MessageType::Stats; };
template <> struct TypeTag<SessionListRequest> { static constexpr auto value = MessageType::SessionListRequest; };
template <> struct TypeTag<SessionList> { static constexpr auto value = MessageType::SessionList; };
template <> struct TypeTag<Subscribe> { static constexpr auto value = MessageType::Subscribe; };
template <> struct TypeTag<SubscribeAck> { static constexpr auto value = MessageType::SubscribeAck; };

// ---- encoding --------------------------------------------------------------

class Writer {
public:
    explicit Writer(Bytes& out) : out_(out) {}

    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) { le(v, 2); }
    void u32(std::uint32_t v) { le(v, 4); }
    void u64(std::uint64_t v) { le(v, 8); }

    void str(std::string_view s, const char* field) {
        if (s.size() > kMaxStringBytes) throw EncodeError(std::string(field) + ": string exceeds 65535 bytes");
        if (!is_valid_utf8(s)) throw EncodeError(std::string(field) + ": not valid UTF-8");
        u16(static_cast<std::uint16_t>(s.size()));
        out_.insert(out_.end(), s.begin(), s.end());
    }

    void raw(ByteView b) { out_.insert(out_.end(), b.begin(), b.end()); }

private:
    void le(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    Bytes& out_;
};

std::uint16_t checked_count(std::size_t n, std::size_t max, const char* what) {
    if (n > max) throw EncodeError(std::string(what) + " exceeds maximum");
    return static_cast<std::uint16_t>(n);
}

void check_status(AckStatus s) {
    if (static_cast<std::uint8_t>(s) > 4) throw EncodeError("invalid ack status");
}

void put(Writer& w, const Hello& m) {
    if (static_cast<std::uint8_t>(m.role) > 1) throw EncodeError("invalid role");
    w.u8(m.version);
    w.u8(static_cast<std::uint8_t>(m.role));
    w.str(m.name, "name");
}
void put(Writer& w, const HelloAck& m) {
    w.u32(m.session_id);
    w.u8(m.server_version);
}
void put(Writer&, const ListProcessors&) {}
void put(Writer& w, const ProcessorList& m) {
    w.u16(checked_count(m.entries.size(), 65535, "processor count"));
    for (const auto& e : m.entries) {
        w.str(e.id, "id");
        w.str(e.display_name, "display_name");
        w.u8(e.flags);
    }
}
void put(Writer& w, const SetProcessor& m) {
    w.u32(m.target_session);
    w.str(m.id, "id");
    w.str(m.options, "options");
}
void put(Writer& w, const SetProcessorAck& m) {
    check_status(m.status);
    w.u32(m.target_session);
    w.str(m.id, "id");
    w.u8(static_cast<std::uint8_t>(m.status));
}
void put(Writer& w, const FrameMsg& m) {
    if (m.payload.size() > kMaxBodyBytes) throw EncodeError("frame payload exceeds body cap");
    w.u32(m.seq);
    w.u64(m.capture_ts_us);
    w.u16(m.width);
    w.u16(m.height);
    w.u8(m.format);
    w.u8(0);
    w.u32(static_cast<std::uint32_t>(m.payload.size()));
    w.raw(m.payload);
}
void put(Writer& w, const ResultMsg& m) {
    w.u32(m.frame_seq);
    w.str(m.processor_id, "processor_id");
    w.u32(m.timing.recv_to_dispatch_us);
    w.u32(m.timing.process_us);
    w.u16(checked_count(m.annotations.size(), kMaxAnnotations, "annotation count"));
    for (const auto& a : m.annotations) {
        if (auto p = annotation_problem(a); !p.empty()) throw EncodeError("annotation: " + p);
        w.u8(static_cast<std::uint8_t>(a.kind));
        w.str(a.label, "label");
        w.u16(a.confidence);
        w.u16(checked_count(a.coords.size(), 65535, "coordinate count"));
        for (const auto& c : a.coords) {
            w.u16(c.x);
            w.u16(c.y);
        }
    }
    if (!m.description) {
        w.u8(0);
        return;
    }
    const auto& d = *m.description;
    if (d.text.empty() || d.text.size() > kMaxDescriptionBytes)
        throw EncodeError("description text must be 1..1024 bytes");
    if (static_cast<std::uint8_t>(d.priority) > 1) throw EncodeError("invalid priority");
    w.u8(1);
    w.u8(static_cast<std::uint8_t>(d.priority));
    w.str(d.text, "description");
}
void put(Writer& w, const Error& m) {
    auto c = static_cast<std::uint8_t>(m.code);
    if (c < 1 || c > 6) throw EncodeError("invalid error code");
    w.u8(c);
    w.str(m.message, "message");
}
void put(Writer& w, const Ping& m) { w.raw(m.token); }
void put(Writer& w, const Pong& m) { w.raw(m.token); }
void put(Writer& w, const StatsRequest& m) { w.u32(m.target_session); }
void put(Writer& w, const Stats& m) {
    w.u32(m.session_id);
    w.u64(m.frames_received);
    w.u64(m.frames_processed);
    w.u64(m.frames_dropped);
    w.u64(m.descriptions_suppressed);
}
void put(Writer&, const SessionListRequest&) {}
void put(Writer& w, const SessionList& m) {
    w.u16(checked_count(m.entries.size(), 65535, "session count"));
    for (const auto& e : m.entries) {
        w.u32(e.session_id);
        w.str(e.name, "name");
        w.str(e.current_processor, "current_processor");
    }
}
void put(Writer& w, const Subscribe& m) { w.u32(m.target_session); }
void put(Writer& w, const SubscribeAck& m) {
    if (m.status != AckStatus::Ok && m.status != AckStatus::NoSuchSession)
        throw EncodeError("subscribe ack status must be ok or no such session");
    w.u32(m.target_session);
    w.u8(static_cast<std::uint8_t>(m.status));
}

// ---- decoding --------------------------------------------------------------

struct Short {
    std::size_t need;
};

struct Bad {
    bool oversize;
    std::string reason;
};

class Reader {
public:
    explicit Reader(ByteView buf) : buf_(buf) {}

    std::size_t pos() const noexcept { return pos_; }

    std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }

    std::string str(const char* field) {
        const auto n = u16();
        auto b = take(n);
        std::string s(reinterpret_cast<const char*>(b.data()), b.size());
        if (!is_valid_utf8(s)) throw Bad{false, std::string(field) + " is not valid UTF-8"};
        return s;
    }

    ByteView take(std::size_t n) {
        require(n);
        auto v = buf_.subspan(pos_, n);
        pos_ += n;
        return v;
    }

private:
    void require(std::size_t n) const {
        const auto have = buf_.size() - pos_;
        if (have < n) throw Short{n - have};
    }
    std::uint64_t le(int n) {
        require(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= std::uint64_t{buf_[pos_ + i]} << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    ByteView buf_;
    std::size_t pos_ = 0;
};

AckStatus ack_status(std::uint8_t v) {
    if (v > 4) throw Bad{false, "unknown ack status " + std::to_string(v)};
    return static_cast<AckStatus>(v);
}

Message read_payload(Reader& r, std::uint8_t type) {
    switch (static_cast<MessageType>(type)) {
        case MessageType::Hello: {
            Hello m;
            m.version = r.u8();
            auto role = r.u8();
            if (role > 1) throw Bad{false, "unknown role " + std::to_string(role)};
            m.role = static_cast<Role>(role);
            m.name = r.str("name");
            return m;
        }
        case MessageType::HelloAck: {
            HelloAck m;
            m.session_id = r.u32();
            m.server_version = r.u8();
            return m;
        }
        case MessageType::ListProcessors: return ListProcessors{};
        case MessageType::ProcessorList: {
            ProcessorList m;
            const auto n = r.u16();
            for (std::uint32_t i = 0; i < n; ++i) {
                ProcessorEntry e;
                e.id = r.str("id");
                e.display_name = r.str("display_name");
                e.flags = r.u8();
                m.entries.push_back(std::move(e));
            }
            return m;
        }
        case MessageType::SetProcessor: {
            SetProcessor m;
            m.target_session = r.u32();
            m.id = r.str("id");
            m.options = r.str("options");
            return m;
        }
        case MessageType::SetProcessorAck: {
            SetProcessorAck m;
            m.target_session = r.u32();
            m.id = r.str("id");
            m.status = ack_status(r.u8());
            return m;
        }
        case MessageType::Frame: {
            FrameMsg m;
            m.seq = r.u32();
            m.capture_ts_us = r.u64();
            m.width = r.u16();
            m.height = r.u16();
            m.format = r.u8();
            if (r.u8() != 0) throw Bad{false, "frame reserved byte must be 0"};
            const auto len = r.u32();
            if (len > kMaxBodyBytes) throw Bad{true, "frame payload exceeds 16 MiB"};
            auto px = r.take(len);
            m.payload.assign(px.begin(), px.end());
            return m;
        }
        case MessageType::Result: {
            ResultMsg m;
            m.frame_seq = r.u32();
            m.processor_id = r.str("processor_id");
            m.timing.recv_to_dispatch_us = r.u32();
            m.timing.process_us = r.u32();
            const auto n = r.u16();
            if (n > kMaxAnnotations) throw Bad{false, "annotation count exceeds 256"};
            for (std::uint32_t i = 0; i < n; ++i) {
                Annotation a;
                auto kind = annotation_kind_from_code(r.u8());
                if (!kind) throw Bad{false, "unknown annotation kind"};
                a.kind = *kind;
                a.label = r.str("label");
                a.confidence = r.u16();
                if (a.confidence > kConfidenceScale) throw Bad{false, "confidence above 10000"};
                const auto nc = r.u16();
                // kind rules are checked before reading so a bad count fails fast
                if ((a.kind == AnnotationKind::Box && nc != 2) ||
                    ((a.kind == AnnotationKind::Point || a.kind == AnnotationKind::Label) && nc != 1) ||
                    (a.kind == AnnotationKind::Polyline && nc < 2))
                    throw Bad{false, "coordinate count does not match annotation kind"};
                a.coords.reserve(nc);
                for (std::uint32_t k = 0; k < nc; ++k) {
                    QPoint p;
                    p.x = r.u16();
                    p.y = r.u16();
                    a.coords.push_back(p);
                }
                if (auto p = annotation_problem(a); !p.empty()) throw Bad{false, p};
                m.annotations.push_back(std::move(a));
            }
            const auto has = r.u8();
            if (has > 1) throw Bad{false, "has_description must be 0 or 1"};
            if (has == 1) {
                const auto pr = r.u8();
                if (pr > 1) throw Bad{false, "unknown priority"};
                Speech s;
                s.priority = static_cast<Priority>(pr);
                s.text = r.str("description");
                if (s.text.empty() || s.text.size() > kMaxDescriptionBytes)
                    throw Bad{false, "description text must be 1..1024 bytes"};
                m.description = std::move(s);
            }
            return m;
        }
        case MessageType::Error: {
            Error m;
            const auto c = r.u8();
            if (c < 1 || c > 6) throw Bad{false, "unknown error code " + std::to_string(c)};
            m.code = static_cast<ErrorCode>(c);
            m.message = r.str("message");
            return m;
        }
        case MessageType::Ping: {
            Ping m;
            auto b = r.take(8);
            std::copy(b.begin(), b.end(), m.token.begin());
            return m;
        }
        case MessageType::Pong: {
            Pong m;
            auto b = r.take(8);
            std::copy(b.begin(), b.end(), m.token.begin());
            return m;
        }
        case MessageType::StatsRequest: return StatsRequest{r.u32()};
        case MessageType::Stats: {
            Stats m;
            m.session_id = r.u32();
            m.frames_received = r.u64();
            m.frames_processed = r.u64();
            m.frames_dropped = r.u64();
            m.descriptions_suppressed = r.u64();
            return m;
        }
        case MessageType::SessionListRequest: return SessionListRequest{};
        case MessageType::SessionList: {
            SessionList m;
            const auto n = r.u16();
            for (std::uint32_t i = 0; i < n; ++i) {
                SessionEntry e;
                e.session_id = r.u32();
                e.name = r.str("name");
                e.current_processor = r.str("current_processor");
                m.entries.push_back(std::move(e));
            }
            return m;
        }
        case MessageType::Subscribe: return Subscribe{r.u32()};
        case MessageType::SubscribeAck: {
            SubscribeAck m;
            m.target_session = r.u32();
            m.status = ack_status(r.u8());
            if (m.status != AckStatus::Ok && m.status != AckStatus::NoSuchSession)
                throw Bad{false, "subscribe ack status must be 0 or 3"};
            return m;
        }
    }
    char hex[8];
    std::snprintf(hex, sizeof hex, "0x%02X", type);
    throw Bad{false, std::string("unknown type ") + hex};
}

}  // namespace

MessageType type_of(const Message& m) noexcept {
    return std::visit([](const auto& v) { return TypeTag<std::decay_t<decltype(v)>>::value; }, m);
}

Bytes encode_body(const Message& m) {
    Bytes out;
    Writer w(out);
    w.u8(static_cast<std::uint8_t>(type_of(m)));
    std::visit([&](const auto& v) { put(w, v); }, m);
    if (out.size() > kMaxBodyBytes) throw EncodeError("body exceeds 16 MiB");
    return out;
}

Bytes frame_body(ByteView body) {
    Bytes out;
    out.reserve(kLengthPrefixBytes + body.size());
    Writer w(out);
    w.u32(static_cast<std::uint32_t>(body.size()));
    w.raw(body);
    return out;
}

Bytes encode_frame(const Message& m) { return frame_body(encode_body(m)); }

DecodeOutcome decode_body(ByteView buf) {
    if (buf.size() > kMaxBodyBytes) buf = buf.first(kMaxBodyBytes);
    Reader r(buf);
    try {
        const auto type = r.u8();
        Message m = read_payload(r, type);
        return Complete{std::move(m), r.pos()};
    } catch (const Short& s) {
        if (buf.size() == kMaxBodyBytes) return Malformed{true, "body exceeds 16 MiB"};
        return NeedMore{s.need};
    } catch (Bad& b) {
        return Malformed{b.oversize, std::move(b.reason)};
    }
}

DecodeOutcome decode_exact(ByteView body) {
    if (body.empty()) return Malformed{false, "empty body"};
    if (body.size() > kMaxBodyBytes) return Malformed{true, "body exceeds 16 MiB"};
    auto out = decode_body(body);
    if (std::holds_alternative<NeedMore>(out)) return Malformed{false, "field overruns message"};
    if (auto* c = std::get_if<Complete>(&out); c && c->consumed != body.size())
        return Malformed{false, "trailing bytes after message"};
    return out;
}

DecodeOutcome decode_frame(ByteView buf) {
    if (buf.size() < kLengthPrefixBytes) return NeedMore{kLengthPrefixBytes - buf.size()};
    const std::size_t len = std::size_t{buf[0]} | std::size_t{buf[1]} << 8 | std::size_t{buf[2]} << 16 |
                            std::size_t{buf[3]} << 24;
    if (len == 0) return Malformed{false, "zero-length body"};
    if (len > kMaxBodyBytes) return Malformed{true, "body exceeds 16 MiB"};
    if (buf.size() < kLengthPrefixBytes + len) return NeedMore{kLengthPrefixBytes + len - buf.size()};
    auto out = decode_exact(buf.subspan(kLengthPrefixBytes, len));
    if (auto* c = std::get_if<Complete>(&out)) c->consumed += kLengthPrefixBytes;
    return out;
}

}  // namespace relay::wire
