#include "relay/server.hpp"

#include <array>
#include <atomic>
#include <condition_variable>
#include <deque>
#include <future>
#include <map>
#include <mutex>
#include <set>
#include <shared_mutex>
#include <thread>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

namespace relay {

bool dedup_filter(const Description& d, DedupPolicy& policy, SteadyClock::time_point now) {
    if (d.priority == Priority::Routine && policy.last_text && *policy.last_text == d.text &&
        now - policy.last_emit < policy.window)
        return false;
    policy.last_text = d.text;
    policy.last_emit = now;
    return true;
}

namespace {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using SharedBytes = std::shared_ptr<const Bytes>;

constexpr std::size_t kMaxQueuedWrites = 4096;

SharedBytes share(const wire::Message& m) { return std::make_shared<const Bytes>(wire::encode_body(m)); }

struct Counters {
    std::atomic<std::uint64_t> received{0};
    std::atomic<std::uint64_t> processed{0};
    std::atomic<std::uint64_t> dropped{0};
    std::atomic<std::uint64_t> suppressed{0};
};

class Link;

struct Session {
    std::uint32_t id = 0;
    std::string name;
    wire::Role role = wire::Role::Source;
    std::weak_ptr<Link> link;
    std::unique_ptr<Pipeline> pipeline;  // sources only
    Counters counters;
    DedupPolicy dedup;                   // dispatcher only
    std::uint32_t last_seq = 0;          // reader only
    bool any_frame = false;              // reader only
    std::mutex subs_mu;
    std::set<std::uint32_t> subscribers;
    std::atomic<bool> stopping{false};

    wire::Stats stats() const {
        return {id, counters.received.load(), counters.processed.load(), counters.dropped.load(),
                counters.suppressed.load()};
    }
};

}  // namespace

class RelayServer::Impl {
public:
    Impl(const Registry& registry, ServerConfig config);

    void start();
    void stop();

    std::optional<wire::Stats> stats(std::uint32_t id) const {
        auto s = find(id);
        if (!s) return std::nullopt;
        return s->stats();
    }

    std::uint16_t tcp_port = 0;
    std::uint16_t ws_port = 0;

    // called from link strands
    void on_message(const std::shared_ptr<Link>& link, wire::Message msg);
    void on_malformed(const std::shared_ptr<Link>& link, const wire::Malformed& m);
    void on_close(const std::shared_ptr<Link>& link);

private:
    void accept_tcp();
    void accept_ws();
    void adopt(const std::shared_ptr<Link>& link);

    std::shared_ptr<Session> find(std::uint32_t id) const {
        std::shared_lock lock(sessions_mu_);
        auto it = sessions_.find(id);
        return it == sessions_.end() ? nullptr : it->second;
    }
    void send_to(std::uint32_t id, const SharedBytes& bytes);
    void send_to_subscribers(Session& s, const SharedBytes& bytes, std::set<std::uint32_t> skip = {});

    void handle_hello(const std::shared_ptr<Link>& link, const wire::Hello& m);
    void handle_frame(const std::shared_ptr<Link>& link, Session& s, wire::FrameMsg m);
    void handle_set_processor(const std::shared_ptr<Link>& link, Session& s, const wire::SetProcessor& m);
    void run_worker(std::shared_ptr<Session> s);
    void emit_result(Session& s, DispatchOutcome out);

    const Registry& registry_;
    ServerConfig config_;
    asio::io_context ioc_;
    std::optional<asio::executor_work_guard<asio::io_context::executor_type>> work_;
    tcp::acceptor tcp_acceptor_;
    tcp::acceptor ws_acceptor_;
    std::vector<std::thread> io_threads_;
    std::atomic<bool> stopping_{false};
    bool started_ = false;

    mutable std::shared_mutex sessions_mu_;
    std::map<std::uint32_t, std::shared_ptr<Session>> sessions_;
    std::atomic<std::uint32_t> next_id_{1};

    std::mutex links_mu_;
    std::set<std::shared_ptr<Link>> links_;

    std::mutex workers_mu_;
    std::condition_variable workers_cv_;
    int active_workers_ = 0;
};

namespace {

/// One client connection. Reads run continuously; writes go through a FIFO
/// outbox drained on the connection's strand.
class Link : public std::enable_shared_from_this<Link> {
public:
    Link(asio::any_io_executor strand, RelayServer::Impl& hub) : strand_(std::move(strand)), hub_(hub) {}
    virtual ~Link() = default;

    virtual void start() = 0;

    /// Thread-safe. Messages are written in the order send() is called.
    void send(SharedBytes body) {
        asio::post(strand_, [self = shared_from_this(), body = std::move(body)]() mutable {
            self->enqueue(std::move(body));
        });
    }
    void send(const wire::Message& m) { send(share(m)); }

    void close_after_flush() {
        asio::post(strand_, [self = shared_from_this()] {
            self->closing_ = true;
            if (!self->writing_) self->shutdown();
        });
    }

    std::future<void> close_now() {
        auto done = std::make_shared<std::promise<void>>();
        auto fut = done->get_future();
        asio::post(strand_, [self = shared_from_this(), done] {
            self->shutdown();
            done->set_value();
        });
        return fut;
    }

    // strand-confined
    std::shared_ptr<Session> session;

protected:
    using WriteDone = std::function<void(beast::error_code)>;
    virtual void write_body(const SharedBytes& body, WriteDone done) = 0;
    virtual void close_transport() = 0;

    void deliver(wire::DecodeOutcome outcome, bool& keep_reading) {
        if (auto* c = std::get_if<wire::Complete>(&outcome)) {
            hub_.on_message(shared_from_this(), std::move(c->message));
        } else if (auto* m = std::get_if<wire::Malformed>(&outcome)) {
            hub_.on_malformed(shared_from_this(), *m);
            keep_reading = false;
        }
        if (closing_ || closed_) keep_reading = false;
    }

    void shutdown() {
        if (closed_) return;
        closed_ = true;
        outbox_.clear();
        close_transport();
        hub_.on_close(shared_from_this());
    }

    asio::any_io_executor strand_;
    RelayServer::Impl& hub_;
    bool closing_ = false;
    bool closed_ = false;

private:
    void enqueue(SharedBytes body) {
        if (closed_) return;
        if (outbox_.size() >= kMaxQueuedWrites) {
            spdlog::warn("dropping connection with {} unsent messages", outbox_.size());
            shutdown();
            return;
        }
        outbox_.push_back(std::move(body));
        if (!writing_) write_next();
    }

    void write_next() {
        if (closed_) return;
        if (outbox_.empty()) {
            writing_ = false;
            if (closing_) shutdown();
            return;
        }
        writing_ = true;
        write_body(outbox_.front(), [self = shared_from_this()](beast::error_code ec) {
            if (self->closed_) return;
            self->outbox_.pop_front();
            if (ec) {
                self->shutdown();
                return;
            }
            self->write_next();
        });
    }

    std::deque<SharedBytes> outbox_;
    bool writing_ = false;
};

class TcpLink final : public Link {
public:
    TcpLink(tcp::socket socket, RelayServer::Impl& hub)
        : Link(socket.get_executor(), hub), socket_(std::move(socket)) {
        beast::error_code ec;
        socket_.set_option(tcp::no_delay(true), ec);
    }

    void start() override {
        asio::dispatch(strand_, [self = std::static_pointer_cast<TcpLink>(shared_from_this())] { self->read_more(); });
    }

private:
    void read_more() {
        socket_.async_read_some(asio::buffer(chunk_),
                                [self = std::static_pointer_cast<TcpLink>(shared_from_this())](
                                    beast::error_code ec, std::size_t n) { self->on_read(ec, n); });
    }

    void on_read(beast::error_code ec, std::size_t n) {
        if (closed_) return;
        if (ec) {
            shutdown();
            return;
        }
        inbox_.insert(inbox_.end(), chunk_.begin(), chunk_.begin() + static_cast<std::ptrdiff_t>(n));
        bool keep_reading = true;
        std::size_t offset = 0;
        while (keep_reading) {
            auto outcome = wire::decode_frame(ByteView(inbox_).subspan(offset));
            if (std::holds_alternative<wire::NeedMore>(outcome)) break;
            if (auto* c = std::get_if<wire::Complete>(&outcome)) offset += c->consumed;
            deliver(std::move(outcome), keep_reading);
        }
        inbox_.erase(inbox_.begin(), inbox_.begin() + static_cast<std::ptrdiff_t>(offset));
        if (keep_reading) read_more();
    }

    void write_body(const SharedBytes& body, WriteDone done) override {
        const auto n = static_cast<std::uint32_t>(body->size());
        prefix_ = {static_cast<std::uint8_t>(n), static_cast<std::uint8_t>(n >> 8), static_cast<std::uint8_t>(n >> 16),
                   static_cast<std::uint8_t>(n >> 24)};
        std::array<asio::const_buffer, 2> bufs{asio::buffer(prefix_), asio::buffer(*body)};
        asio::async_write(socket_, bufs, [body, done = std::move(done)](beast::error_code ec, std::size_t) { done(ec); });
    }

    void close_transport() override {
        beast::error_code ec;
        socket_.shutdown(tcp::socket::shutdown_both, ec);
        socket_.close(ec);
    }

    tcp::socket socket_;
    std::array<std::uint8_t, 65536> chunk_{};
    Bytes inbox_;
    std::array<std::uint8_t, 4> prefix_{};
};

class WsLink final : public Link {
public:
    WsLink(tcp::socket socket, RelayServer::Impl& hub) : Link(socket.get_executor(), hub), ws_(std::move(socket)) {}

    void start() override {
        asio::dispatch(strand_, [self = std::static_pointer_cast<WsLink>(shared_from_this())] {
            self->ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
            self->ws_.read_message_max(wire::kMaxBodyBytes);
            self->ws_.binary(true);
            self->ws_.async_accept([self](beast::error_code ec) {
                if (ec) {
                    self->shutdown();
                    return;
                }
                self->read_more();
            });
        });
    }

private:
    void read_more() {
        ws_.async_read(buffer_, [self = std::static_pointer_cast<WsLink>(shared_from_this())](beast::error_code ec,
                                                                                              std::size_t) {
            self->on_read(ec);
        });
    }

    void on_read(beast::error_code ec) {
        if (closed_) return;
        if (ec) {
            shutdown();
            return;
        }
        bool keep_reading = true;
        if (!ws_.got_binary()) {
            deliver(wire::Malformed{false, "text frames are not part of the protocol"}, keep_reading);
        } else {
            auto data = buffer_.cdata();
            Bytes body(static_cast<const std::uint8_t*>(data.data()),
                       static_cast<const std::uint8_t*>(data.data()) + data.size());
            deliver(wire::decode_exact(body), keep_reading);
        }
        buffer_.consume(buffer_.size());
        if (keep_reading) read_more();
    }

    void write_body(const SharedBytes& body, WriteDone done) override {
        ws_.async_write(asio::buffer(*body), [body, done = std::move(done)](beast::error_code ec, std::size_t) { done(ec); });
    }

    void close_transport() override {
        beast::error_code ec;
        beast::get_lowest_layer(ws_).shutdown(tcp::socket::shutdown_both, ec);
        beast::get_lowest_layer(ws_).close(ec);
    }

    websocket::stream<tcp::socket> ws_;
    beast::flat_buffer buffer_;
};

}  // namespace

// ---- lifecycle -------------------------------------------------------------

RelayServer::Impl::Impl(const Registry& registry, ServerConfig config)
    : registry_(registry), config_(std::move(config)), tcp_acceptor_(ioc_), ws_acceptor_(ioc_) {
    if (!registry_.finalized()) throw ConfigError("processor registry is not finalized");
    auto probe = registry_.create(config_.default_processor, config_.default_options);
    if (probe.status != CreateStatus::Ok)
        throw ConfigError("default processor '" + config_.default_processor + "' unusable: " + probe.error);
    if (config_.enable_ws && config_.tcp_port != 0 && config_.tcp_host == config_.ws_host &&
        config_.tcp_port == config_.ws_port)
        throw ConfigError("TCP and WebSocket listeners must use distinct addresses");
    if (config_.dedup_window.count() < 0) throw ConfigError("dedup window must be non-negative");
    if (!config_.dedup_clock) config_.dedup_clock = [] { return SteadyClock::now(); };
    if (config_.io_threads < 1) config_.io_threads = 1;
}

namespace {

void listen(tcp::acceptor& acceptor, asio::io_context& ioc, const std::string& host, std::uint16_t port) {
    beast::error_code ec;
    auto addr = asio::ip::make_address(host, ec);
    if (ec) {
        tcp::resolver resolver(ioc);
        auto results = resolver.resolve(host, std::to_string(port), ec);
        if (ec || results.empty()) throw BindError("cannot resolve " + host + ": " + ec.message());
        addr = results.begin()->endpoint().address();
    }
    tcp::endpoint ep(addr, port);
    acceptor.open(ep.protocol(), ec);
    if (!ec) acceptor.set_option(tcp::acceptor::reuse_address(true), ec);
    if (!ec) acceptor.bind(ep, ec);
    if (!ec) acceptor.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) throw BindError("cannot listen on " + host + ":" + std::to_string(port) + ": " + ec.message());
}

}  // namespace

void RelayServer::Impl::start() {
    if (started_) return;
    listen(tcp_acceptor_, ioc_, config_.tcp_host, config_.tcp_port);
    tcp_port = tcp_acceptor_.local_endpoint().port();
    if (config_.enable_ws) {
        listen(ws_acceptor_, ioc_, config_.ws_host, config_.ws_port);
        ws_port = ws_acceptor_.local_endpoint().port();
    }
    started_ = true;
    work_.emplace(ioc_.get_executor());
    accept_tcp();
    if (config_.enable_ws) accept_ws();
    for (int i = 0; i < config_.io_threads; ++i) io_threads_.emplace_back([this] { ioc_.run(); });
    spdlog::info("relay listening: tcp {}:{}{}", config_.tcp_host, tcp_port,
                 config_.enable_ws ? fmt::format(", ws {}:{}", config_.ws_host, ws_port) : std::string{});
}

void RelayServer::Impl::stop() {
    if (!started_ || stopping_.exchange(true)) return;
    std::promise<void> closed;
    asio::post(ioc_, [&] {
        beast::error_code ec;
        tcp_acceptor_.close(ec);
        ws_acceptor_.close(ec);
        closed.set_value();
    });
    closed.get_future().wait();

    std::vector<std::shared_ptr<Link>> links;
    {
        std::lock_guard lock(links_mu_);
        links.assign(links_.begin(), links_.end());
    }
    // wait for the sockets to close; handlers still queued at ioc_.stop() would
    // otherwise keep them open
    std::vector<std::future<void>> closing;
    for (auto& l : links) closing.push_back(l->close_now());
    for (auto& f : closing) f.wait();
    {
        std::shared_lock lock(sessions_mu_);
        for (auto& [id, s] : sessions_) {
            s->stopping = true;
            if (s->pipeline) s->pipeline->mailbox().close();
        }
    }
    {
        std::unique_lock lock(workers_mu_);
        workers_cv_.wait(lock, [&] { return active_workers_ == 0; });
    }
    work_.reset();
    ioc_.stop();
    for (auto& t : io_threads_)
        if (t.joinable()) t.join();
    io_threads_.clear();
    {
        std::lock_guard lock(links_mu_);
        links_.clear();
    }
    std::unique_lock lock(sessions_mu_);
    sessions_.clear();
}

void RelayServer::Impl::accept_tcp() {
    tcp_acceptor_.async_accept(asio::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
        if (ec) {
            if (!stopping_ && ec != asio::error::operation_aborted) accept_tcp();
            return;
        }
        adopt(std::make_shared<TcpLink>(std::move(socket), *this));
        accept_tcp();
    });
}

void RelayServer::Impl::accept_ws() {
    ws_acceptor_.async_accept(asio::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
        if (ec) {
            if (!stopping_ && ec != asio::error::operation_aborted) accept_ws();
            return;
        }
        adopt(std::make_shared<WsLink>(std::move(socket), *this));
        accept_ws();
    });
}

void RelayServer::Impl::adopt(const std::shared_ptr<Link>& link) {
    {
        std::lock_guard lock(links_mu_);
        if (stopping_) {
            link->close_now();
            return;
        }
        links_.insert(link);
    }
    link->start();
}

// ---- message handling ------------------------------------------------------

void RelayServer::Impl::send_to(std::uint32_t id, const SharedBytes& bytes) {
    if (auto s = find(id))
        if (auto l = s->link.lock()) l->send(bytes);
}

void RelayServer::Impl::send_to_subscribers(Session& s, const SharedBytes& bytes, std::set<std::uint32_t> skip) {
    std::lock_guard lock(s.subs_mu);
    for (auto it = s.subscribers.begin(); it != s.subscribers.end();) {
        std::shared_ptr<Link> link;
        if (auto sub = find(*it)) link = sub->link.lock();
        if (!link) {
            it = s.subscribers.erase(it);
            continue;
        }
        if (!skip.contains(*it)) link->send(bytes);
        ++it;
    }
}

void RelayServer::Impl::on_malformed(const std::shared_ptr<Link>& link, const wire::Malformed& m) {
    spdlog::warn("malformed message: {}", m.reason);
    link->send(wire::Error{m.oversize ? wire::ErrorCode::FrameTooLarge : wire::ErrorCode::Malformed, m.reason});
    link->close_after_flush();
}

void RelayServer::Impl::on_close(const std::shared_ptr<Link>& link) {
    {
        std::lock_guard lock(links_mu_);
        links_.erase(link);
    }
    auto s = std::move(link->session);
    if (!s) return;
    s->stopping = true;
    if (s->pipeline) s->pipeline->mailbox().close();
    std::unique_lock lock(sessions_mu_);
    sessions_.erase(s->id);
    spdlog::info("session {} closed", s->id);
}

void RelayServer::Impl::handle_hello(const std::shared_ptr<Link>& link, const wire::Hello& m) {
    if (m.version != wire::kProtocolVersion) {
        link->send(wire::Error{wire::ErrorCode::UnsupportedVersion,
                               "unsupported protocol version " + std::to_string(m.version)});
        link->close_after_flush();
        return;
    }
    auto s = std::make_shared<Session>();
    s->id = next_id_.fetch_add(1);
    s->name = m.name;
    s->role = m.role;
    s->link = link;
    s->dedup.window = config_.dedup_window;
    if (m.role == wire::Role::Source) {
        try {
            s->pipeline = std::make_unique<Pipeline>(registry_, config_.default_processor, config_.default_options);
        } catch (const std::exception& e) {
            link->send(wire::Error{wire::ErrorCode::Internal, e.what()});
            link->close_after_flush();
            return;
        }
    }
    link->session = s;
    {
        std::unique_lock lock(sessions_mu_);
        sessions_.emplace(s->id, s);
    }
    link->send(wire::HelloAck{s->id, wire::kProtocolVersion});
    spdlog::info("session {} opened ({}, '{}')", s->id, m.role == wire::Role::Source ? "source" : "console", m.name);
    if (s->pipeline) {
        {
            std::lock_guard lock(workers_mu_);
            ++active_workers_;
        }
        std::thread([this, s] { run_worker(s); }).detach();
    }
}

void RelayServer::Impl::on_message(const std::shared_ptr<Link>& link, wire::Message msg) {
    if (!link->session) {
        if (auto* hello = std::get_if<wire::Hello>(&msg)) {
            handle_hello(link, *hello);
        } else {
            link->send(wire::Error{wire::ErrorCode::Malformed, "expected HELLO first"});
            link->close_after_flush();
        }
        return;
    }
    auto session = link->session;
    Session& s = *session;

    std::visit(
        [&](auto&& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, wire::FrameMsg>) {
                handle_frame(link, s, std::move(m));
            } else if constexpr (std::is_same_v<T, wire::SetProcessor>) {
                handle_set_processor(link, s, m);
            } else if constexpr (std::is_same_v<T, wire::ListProcessors>) {
                wire::ProcessorList list;
                for (const auto& d : registry_.list())
                    list.entries.push_back({d.id, d.display_name, static_cast<std::uint8_t>(d.remote ? 1 : 0)});
                link->send(list);
            } else if constexpr (std::is_same_v<T, wire::StatsRequest>) {
                auto target = m.target_session == 0 ? session : find(m.target_session);
                if (!target)
                    link->send(wire::Error{wire::ErrorCode::Malformed,
                                           "no such session " + std::to_string(m.target_session)});
                else
                    link->send(target->stats());
            } else if constexpr (std::is_same_v<T, wire::SessionListRequest>) {
                std::vector<std::shared_ptr<Session>> live;
                {
                    std::shared_lock lock(sessions_mu_);
                    for (auto& [id, other] : sessions_)
                        if (other->role == wire::Role::Source) live.push_back(other);
                }
                wire::SessionList list;
                for (auto& other : live)
                    list.entries.push_back({other->id, other->name, other->pipeline->current_id()});
                link->send(list);
            } else if constexpr (std::is_same_v<T, wire::Subscribe>) {
                auto target = find(m.target_session);
                if (!target || target->role != wire::Role::Source) {
                    link->send(wire::SubscribeAck{m.target_session, wire::AckStatus::NoSuchSession});
                } else {
                    {
                        std::lock_guard lock(target->subs_mu);
                        target->subscribers.insert(s.id);
                    }
                    link->send(wire::SubscribeAck{m.target_session, wire::AckStatus::Ok});
                }
            } else if constexpr (std::is_same_v<T, wire::Ping>) {
                link->send(wire::Pong{m.token});
            } else if constexpr (std::is_same_v<T, wire::Hello>) {
                link->send(wire::Error{wire::ErrorCode::Malformed, "duplicate HELLO"});
            } else {
                link->send(wire::Error{wire::ErrorCode::Malformed,
                                       std::string(wire::to_string(wire::type_of(wire::Message{m}))) +
                                           " is not accepted by the server"});
            }
        },
        std::move(msg));
}

void RelayServer::Impl::handle_frame(const std::shared_ptr<Link>& link, Session& s, wire::FrameMsg m) {
    if (s.role != wire::Role::Source) {
        link->send(wire::Error{wire::ErrorCode::Malformed, "console sessions cannot send frames"});
        return;
    }
    s.counters.received.fetch_add(1);
    const auto check = validate_frame(m.width, m.height, m.format, m.payload.size());
    if (check != FrameCheck::Ok) {
        const bool too_large = check == FrameCheck::Dims && (m.width > kMaxFrameDimension || m.height > kMaxFrameDimension);
        link->send(wire::Error{too_large ? wire::ErrorCode::FrameTooLarge : wire::ErrorCode::Malformed,
                               "frame " + std::to_string(m.seq) + " rejected: " + std::string(to_string(check))});
        return;
    }
    if (s.any_frame && m.seq <= s.last_seq) {
        link->send(wire::Error{wire::ErrorCode::Malformed,
                               "frame " + std::to_string(m.seq) + " rejected: sequence not increasing"});
        return;
    }
    s.any_frame = true;
    s.last_seq = m.seq;
    if (s.pipeline->submit(m.to_frame())) s.counters.dropped.fetch_add(1);
}

void RelayServer::Impl::handle_set_processor(const std::shared_ptr<Link>& link, Session& s,
                                             const wire::SetProcessor& m) {
    const auto target_id = m.target_session == 0 ? s.id : m.target_session;
    auto target = find(target_id);
    auto reply = [&](wire::AckStatus st) { link->send(wire::SetProcessorAck{target_id, m.id, st}); };
    if (!target) return reply(wire::AckStatus::NoSuchSession);
    if (target->role != wire::Role::Source) return reply(wire::AckStatus::NotPermitted);

    auto status = target->pipeline->switch_processor(m.id, m.options, [&] {
        // runs before the new instance can produce anything
        auto ack = share(wire::SetProcessorAck{target_id, m.id, wire::AckStatus::Ok});
        std::set<std::uint32_t> skip{target->id};
        if (auto l = target->link.lock()) l->send(ack);
        if (s.id != target->id) {
            link->send(ack);
            skip.insert(s.id);
        }
        send_to_subscribers(*target, ack, skip);
    });
    if (status == SwitchStatus::UnknownId) reply(wire::AckStatus::UnknownId);
    if (status == SwitchStatus::BadOptions) reply(wire::AckStatus::BadOptions);
    if (status == SwitchStatus::Ok) spdlog::info("session {} switched to {}", target_id, m.id);
}

// ---- dispatch --------------------------------------------------------------

void RelayServer::Impl::run_worker(std::shared_ptr<Session> s) {
    while (!s->stopping) {
        auto out = s->pipeline->dispatch_wait(std::chrono::milliseconds(100));
        if (!out) continue;
        emit_result(*s, std::move(*out));
    }
    std::lock_guard lock(workers_mu_);
    --active_workers_;
    workers_cv_.notify_all();
}

void RelayServer::Impl::emit_result(Session& s, DispatchOutcome out) {
    auto link = s.link.lock();
    if (out.failed) {
        spdlog::warn("session {}: processor {} failed: {}", s.id, out.result.processor, out.error);
        if (link) link->send(wire::Error{wire::ErrorCode::Internal, "processor error: " + out.result.processor});
    }
    auto& result = out.result;
    if (result.description && !dedup_filter(*result.description, s.dedup, config_.dedup_clock())) {
        result.description.reset();
        s.counters.suppressed.fetch_add(1);
    }
    s.counters.processed.fetch_add(1);
    auto bytes = share(wire::ResultMsg::from(result));
    if (link) link->send(bytes);
    send_to_subscribers(s, bytes);
}

// ---- facade ----------------------------------------------------------------

RelayServer::RelayServer(const Registry& registry, ServerConfig config)
    : impl_(std::make_unique<Impl>(registry, std::move(config))) {}

RelayServer::~RelayServer() { stop(); }

void RelayServer::start() { impl_->start(); }
void RelayServer::stop() { impl_->stop(); }
std::uint16_t RelayServer::tcp_port() const noexcept { return impl_->tcp_port; }
std::uint16_t RelayServer::ws_port() const noexcept { return impl_->ws_port; }
std::optional<wire::Stats> RelayServer::stats(std::uint32_t id) const { return impl_->stats(id); }

}  // namespace relay
