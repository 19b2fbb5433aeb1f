#pragma once

// Binary protocol shared by sources, consoles and the server.
//
// A message body is a type byte followed by the type's payload. Integers are
// little-endian; strings are a u16 byte length followed by UTF-8. On TCP every
// body is preceded by a u32 little-endian body length; on WebSocket each binary
// message carries exactly one body.
//
// Encoding is canonical: for any decoded message, re-encoding reproduces the
// input bytes exactly.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "relay/core.hpp"

namespace relay::wire {

inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::size_t kMaxBodyBytes = 16u * 1024u * 1024u;
inline constexpr std::size_t kLengthPrefixBytes = 4;
inline constexpr std::size_t kMaxStringBytes = 65535;

enum class MessageType : std::uint8_t {
    Hello = 0x01,
    HelloAck = 0x02,
    ListProcessors = 0x03,
    ProcessorList = 0x04,
    SetProcessor = 0x05,
    SetProcessorAck = 0x06,
    Frame = 0x07,
    Result = 0x08,
    Error = 0x09,
    Ping = 0x0A,
    Pong = 0x0B,
    StatsRequest = 0x0C,
    Stats = 0x0D,
    SessionListRequest = 0x0E,
    SessionList = 0x0F,
    Subscribe = 0x10,
    SubscribeAck = 0x11,
};

enum class Role : std::uint8_t { Source = 0, Console = 1 };

enum class AckStatus : std::uint8_t {
    Ok = 0,
    UnknownId = 1,
    BadOptions = 2,
    NoSuchSession = 3,
    NotPermitted = 4,
};

enum class ErrorCode : std::uint8_t {
    Malformed = 1,
    UnsupportedVersion = 2,
    FrameTooLarge = 3,
    UnknownProcessor = 4,
    Internal = 5,
    Limit = 6,
};

std::string_view to_string(AckStatus s) noexcept;
std::string_view to_string(MessageType t) noexcept;

struct Hello {
    std::uint8_t version = kProtocolVersion;
    Role role = Role::Source;
    std::string name;
    bool operator==(const Hello&) const = default;
};

struct HelloAck {
    std::uint32_t session_id = 0;
    std::uint8_t server_version = kProtocolVersion;
    bool operator==(const HelloAck&) const = default;
};

struct ListProcessors {
    bool operator==(const ListProcessors&) const = default;
};

struct ProcessorEntry {
    std::string id;
    std::string display_name;
    std::uint8_t flags = 0;  // bit0: uses a remote network service
    bool operator==(const ProcessorEntry&) const = default;
};

struct ProcessorList {
    std::vector<ProcessorEntry> entries;
    bool operator==(const ProcessorList&) const = default;
};

struct SetProcessor {
    std::uint32_t target_session = 0;  // 0 = the sender's own session
    std::string id;
    std::string options;
    bool operator==(const SetProcessor&) const = default;
};

struct SetProcessorAck {
    std::uint32_t target_session = 0;
    std::string id;
    AckStatus status = AckStatus::Ok;
    bool operator==(const SetProcessorAck&) const = default;
};

/// FRAME as carried on the wire. The format stays a raw code so that the
/// server, not the codec, decides how to reject unknown formats.
struct FrameMsg {
    std::uint32_t seq = 0;
    std::uint64_t capture_ts_us = 0;
    std::uint16_t width = 0;
    std::uint16_t height = 0;
    std::uint8_t format = 0;
    Bytes payload;
    bool operator==(const FrameMsg&) const = default;

    static FrameMsg from(const Frame& f);
    /// Throws ContractViolation when the geometry is invalid.
    Frame to_frame() const;
};

struct ResultMsg {
    std::uint32_t frame_seq = 0;
    std::string processor_id;
    TimingBreakdown timing;
    std::vector<Annotation> annotations;
    std::optional<Speech> description;
    bool operator==(const ResultMsg&) const = default;

    static ResultMsg from(const ProcessResult& r);
};

struct Error {
    ErrorCode code = ErrorCode::Internal;
    std::string message;
    bool operator==(const Error&) const = default;
};

using Token = std::array<std::uint8_t, 8>;

struct Ping {
    Token token{};
    bool operator==(const Ping&) const = default;
};

struct Pong {
    Token token{};
    bool operator==(const Pong&) const = default;
};

struct StatsRequest {
    std::uint32_t target_session = 0;
    bool operator==(const StatsRequest&) const = default;
};

struct Stats {
    std::uint32_t session_id = 0;
    std::uint64_t frames_received = 0;
    std::uint64_t frames_processed = 0;
    std::uint64_t frames_dropped = 0;
    std::uint64_t descriptions_suppressed = 0;
    bool operator==(const Stats&) const = default;
};

struct SessionListRequest {
    bool operator==(const SessionListRequest&) const = default;
};

struct SessionEntry {
    std::uint32_t session_id = 0;
    std::string name;
    std::string current_processor;
    bool operator==(const SessionEntry&) const = default;
};

struct SessionList {
    std::vector<SessionEntry> entries;
    bool operator==(const SessionList&) const = default;
};

struct Subscribe {
    std::uint32_t target_session = 0;
    bool operator==(const Subscribe&) const = default;
};

struct SubscribeAck {
    std::uint32_t target_session = 0;
    AckStatus status = AckStatus::Ok;  // Ok or NoSuchSession
    bool operator==(const SubscribeAck&) const = default;
};

using Message = std::variant<Hello, HelloAck, ListProcessors, ProcessorList, SetProcessor,
                             SetProcessorAck, FrameMsg, ResultMsg, Error, Ping, Pong, StatsRequest,
                             Stats, SessionListRequest, SessionList, Subscribe, SubscribeAck>;

MessageType type_of(const Message& m) noexcept;

class EncodeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Body only: type byte + payload. Throws EncodeError for out-of-contract fields.
Bytes encode_body(const Message& m);

/// TCP framing: u32 body length + body.
Bytes encode_frame(const Message& m);
Bytes frame_body(ByteView body);

struct Complete {
    Message message;
    std::size_t consumed = 0;
};

struct NeedMore {
    std::size_t bytes = 1;  // never 0
};

struct Malformed {
    bool oversize = false;  // size cap exceeded, as opposed to bad content
    std::string reason;
};

using DecodeOutcome = std::variant<Complete, NeedMore, Malformed>;

/// Decodes one body from the front of buf. A buffer that ends inside a field
/// yields NeedMore; trailing bytes after the body are left unconsumed.
DecodeOutcome decode_body(ByteView buf);

/// Decodes one length-prefixed TCP message from the front of buf.
DecodeOutcome decode_frame(ByteView buf);

/// Decodes a transport-delimited body (one WebSocket message). The body must
/// hold exactly one message; truncation or trailing bytes are Malformed.
DecodeOutcome decode_exact(ByteView body);

}  // namespace relay::wire
