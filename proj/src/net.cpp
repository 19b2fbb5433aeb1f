#include "relay/net.hpp"

#include <cerrno>
#include <charconv>
#include <cstring>

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

namespace relay::net {

HostPort parse_host_port(std::string_view text) {
    const auto colon = text.rfind(':');
    if (colon == std::string_view::npos || colon == 0 || colon + 1 == text.size())
        throw std::invalid_argument("expected HOST:PORT, got '" + std::string(text) + "'");
    unsigned port = 0;
    const auto digits = text.substr(colon + 1);
    auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
    if (ec != std::errc{} || p != digits.data() + digits.size() || port > 65535)
        throw std::invalid_argument("bad port in '" + std::string(text) + "'");
    return {std::string(text.substr(0, colon)), static_cast<std::uint16_t>(port)};
}

TcpStream TcpStream::connect(const HostPort& where) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* found = nullptr;
    const auto port = std::to_string(where.port);
    if (int rc = ::getaddrinfo(where.host.c_str(), port.c_str(), &hints, &found); rc != 0)
        throw ConnectError("cannot resolve " + where.host + ": " + ::gai_strerror(rc));
    std::string last_error = "no addresses";
    for (auto* ai = found; ai; ai = ai->ai_next) {
        int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
            ::freeaddrinfo(found);
            int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            return TcpStream(fd);
        }
        last_error = std::strerror(errno);
        ::close(fd);
    }
    ::freeaddrinfo(found);
    throw ConnectError("cannot connect to " + where.host + ":" + port + ": " + last_error);
}

TcpStream::TcpStream(TcpStream&& other) noexcept : fd_(other.fd_), inbox_(std::move(other.inbox_)) {
    other.fd_ = -1;
}

TcpStream::~TcpStream() {
    if (fd_ >= 0) ::close(fd_);
}

void TcpStream::send(const wire::Message& m) { send_bytes(wire::encode_frame(m)); }

void TcpStream::send_bytes(ByteView bytes) {
    std::lock_guard lock(send_mu_);
    std::size_t off = 0;
    while (off < bytes.size()) {
        auto n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Disconnected(std::string("send failed: ") + std::strerror(errno));
        }
        off += static_cast<std::size_t>(n);
    }
}

std::optional<wire::Message> TcpStream::receive(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
        auto outcome = wire::decode_frame(inbox_);
        if (auto* c = std::get_if<wire::Complete>(&outcome)) {
            inbox_.erase(inbox_.begin(), inbox_.begin() + static_cast<std::ptrdiff_t>(c->consumed));
            return std::move(c->message);
        }
        if (auto* m = std::get_if<wire::Malformed>(&outcome)) throw ProtocolError(m->reason);

        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) return std::nullopt;
        pollfd pfd{fd_, POLLIN, 0};
        int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
        if (rc < 0) {
            if (errno == EINTR) continue;
            throw Disconnected(std::string("poll failed: ") + std::strerror(errno));
        }
        if (rc == 0) return std::nullopt;
        std::uint8_t buf[65536];
        auto n = ::recv(fd_, buf, sizeof buf, 0);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            throw Disconnected(std::string("recv failed: ") + std::strerror(errno));
        }
        if (n == 0) throw Disconnected("connection closed by peer");
        inbox_.insert(inbox_.end(), buf, buf + n);
    }
}

void TcpStream::shutdown() noexcept {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

}  // namespace relay::net
