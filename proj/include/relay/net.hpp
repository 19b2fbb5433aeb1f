#pragma once

// Blocking TCP endpoint speaking the length-prefixed protocol. Used by the
// CLI client and by tests; one sender thread and one receiver thread may use
// a stream concurrently.

#include <chrono>
#include <cstdint>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "relay/wire.hpp"

namespace relay::net {

struct HostPort {
    std::string host;
    std::uint16_t port = 0;
};

/// "HOST:PORT"; throws std::invalid_argument.
HostPort parse_host_port(std::string_view text);

class ConnectError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The peer closed the connection or the socket failed.
class Disconnected : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The peer sent bytes that do not decode.
class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TcpStream {
public:
    static TcpStream connect(const HostPort& where);

    TcpStream(TcpStream&& other) noexcept;
    TcpStream& operator=(TcpStream&&) = delete;
    TcpStream(const TcpStream&) = delete;
    ~TcpStream();

    void send(const wire::Message& m);
    void send_bytes(ByteView bytes);

    /// Next message, or nullopt when nothing complete arrives within timeout.
    std::optional<wire::Message> receive(std::chrono::milliseconds timeout);

    /// Half-closes both directions; a blocked receive() wakes up.
    void shutdown() noexcept;

private:
    explicit TcpStream(int fd) : fd_(fd) {}

    int fd_ = -1;
    std::mutex send_mu_;
    Bytes inbox_;
};

}  // namespace relay::net
