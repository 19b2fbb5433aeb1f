#include "relay/client.hpp"

#include <algorithm>
#include <cerrno>
#include <csignal>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include "relay/builtins.hpp"
#include "relay/net.hpp"

extern char** environ;

namespace relay::client {

// ---- sources ---------------------------------------------------------------

Frame read_pnm(const std::filesystem::path& path, std::uint32_t seq, std::uint64_t ts_us) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SourceError(path.string() + ": cannot open");
    auto fail = [&](const std::string& why) { return SourceError(path.string() + ": " + why); };

    auto token = [&]() {
        std::string t;
        int c;
        while ((c = in.get()) != EOF) {
            if (c == '#') {
                while ((c = in.get()) != EOF && c != '\n') {}
                continue;
            }
            if (std::isspace(c)) {
                if (!t.empty()) break;
                continue;
            }
            t += static_cast<char>(c);
        }
        if (t.empty()) throw fail("truncated header");
        return t;
    };
    auto number = [&]() {
        const auto t = token();
        if (!std::all_of(t.begin(), t.end(), [](char ch) { return ch >= '0' && ch <= '9'; }) || t.size() > 6)
            throw fail("bad header field '" + t + "'");
        return static_cast<std::uint32_t>(std::stoul(t));
    };

    const auto magic = token();
    PixelFormat format;
    if (magic == "P5") format = PixelFormat::Gray8;
    else if (magic == "P6") format = PixelFormat::Rgb8;
    else throw fail("not a binary PGM/PPM (magic '" + magic + "')");
    const auto width = number();
    const auto height = number();
    const auto maxval = number();
    if (maxval != 255) throw fail("maxval must be 255");
    if (validate_frame(width, height, static_cast<std::uint8_t>(format), std::size_t{width} * height * bytes_per_pixel(format)) !=
        FrameCheck::Ok)
        throw fail("unsupported dimensions " + std::to_string(width) + "x" + std::to_string(height));
    Bytes pixels(std::size_t{width} * height * bytes_per_pixel(format));
    in.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(pixels.size())) throw fail("truncated pixel data");
    return Frame(seq, ts_us, width, height, format, std::move(pixels));
}

std::optional<Frame> FrameSource::next() {
    const auto now = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - epoch_);
    // strictly increasing even when two frames land in the same microsecond
    const auto ts = std::max<std::uint64_t>(static_cast<std::uint64_t>(now.count()), seq_ == 0 ? 0 : last_ts_ + 1);
    auto f = produce(seq_ + 1, ts);
    if (!f) return std::nullopt;
    ++seq_;
    last_ts_ = ts;
    return f;
}

namespace {

class DirSource final : public FrameSource {
public:
    DirSource(const std::filesystem::path& dir, bool loop) : loop_(loop) {
        std::error_code ec;
        if (!std::filesystem::is_directory(dir, ec)) throw SourceError(dir.string() + ": not a directory");
        for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
            const auto ext = entry.path().extension().string();
            if (entry.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) files_.push_back(entry.path());
        }
        std::sort(files_.begin(), files_.end(),
                  [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
        if (files_.empty()) throw SourceError(dir.string() + ": no .pgm/.ppm files");
    }

protected:
    std::optional<Frame> produce(std::uint32_t seq, std::uint64_t ts) override {
        if (index_ == files_.size()) {
            if (!loop_) return std::nullopt;
            index_ = 0;
        }
        return read_pnm(files_[index_++], seq, ts);
    }

private:
    std::vector<std::filesystem::path> files_;
    std::size_t index_ = 0;
    bool loop_;
};

class BarsSource final : public FrameSource {
protected:
    std::optional<Frame> produce(std::uint32_t seq, std::uint64_t ts) override {
        GrayImage img(kSyntheticWidth, kSyntheticHeight);
        constexpr std::uint32_t bars = 8;
        for (std::uint32_t y = 0; y < img.height; ++y)
            for (std::uint32_t x = 0; x < img.width; ++x)
                img.at(x, y) = static_cast<std::uint8_t>((x * bars / img.width) * 255 / (bars - 1));
        return img.to_frame(seq, ts);
    }
};

class TextSource final : public FrameSource {
public:
    explicit TextSource(std::string text) : canvas_(kSyntheticWidth, kSyntheticHeight) {
        const int x = (static_cast<int>(kSyntheticWidth) - text_width(text)) / 2;
        const int y = (static_cast<int>(kSyntheticHeight) - kGlyphHeight) / 2;
        try {
            render_text(text, x, y, canvas_);
        } catch (const RenderError& e) {
            throw SourceError("synthetic:text: " + std::string(e.what()));
        }
    }

protected:
    std::optional<Frame> produce(std::uint32_t seq, std::uint64_t ts) override { return canvas_.to_frame(seq, ts); }

private:
    GrayImage canvas_;
};

class MovingBoxSource final : public FrameSource {
protected:
    std::optional<Frame> produce(std::uint32_t seq, std::uint64_t ts) override {
        GrayImage img(kSyntheticWidth, kSyntheticHeight);
        constexpr std::uint32_t positions = kSyntheticWidth - kMovingBoxSize + 1;
        const std::uint32_t x0 = static_cast<std::uint32_t>((std::uint64_t{seq - 1} * kMovingBoxStride) % positions);
        const std::uint32_t y0 = (kSyntheticHeight - kMovingBoxSize) / 2;
        for (std::uint32_t y = y0; y < y0 + kMovingBoxSize; ++y)
            for (std::uint32_t x = x0; x < x0 + kMovingBoxSize; ++x) img.at(x, y) = 255;
        return img.to_frame(seq, ts);
    }
};

}  // namespace

std::unique_ptr<FrameSource> make_source(const std::string& spec, bool loop) {
    if (spec.rfind("dir:", 0) == 0) return std::make_unique<DirSource>(spec.substr(4), loop);
    if (spec == "synthetic:bars") return std::make_unique<BarsSource>();
    if (spec == "synthetic:moving_box") return std::make_unique<MovingBoxSource>();
    if (spec.rfind("synthetic:text=", 0) == 0) return std::make_unique<TextSource>(spec.substr(15));
    throw SourceError("unknown source '" + spec + "'");
}

// ---- transcript ------------------------------------------------------------

std::optional<std::string> transcript_line(const wire::ResultMsg& result) {
    if (!result.description) return std::nullopt;
    std::ostringstream line;
    line << "[seq=" << result.frame_seq << "][proc=" << result.processor_id
         << "][p=" << to_string(result.description->priority) << "] " << result.description->text;
    return line.str();
}

// ---- speech hook -----------------------------------------------------------

TtsHook::TtsHook(std::string command, std::ostream& warnings) : command_(std::move(command)), warnings_(warnings) {
    std::signal(SIGPIPE, SIG_IGN);
    worker_ = std::thread([this] { run(); });
}

TtsHook::~TtsHook() {
    {
        std::lock_guard lock(mu_);
        stop_ = true;
        queue_.clear();
    }
    cv_.notify_all();
    worker_.join();
}

void TtsHook::say(const std::string& text, Priority priority) {
    if (disabled_) return;
    {
        std::lock_guard lock(mu_);
        if (priority == Priority::Interrupt) {
            queue_.clear();
            queue_.push_front(text);
            interrupt_pending_ = true;
        } else {
            queue_.push_back(text);
        }
    }
    cv_.notify_all();
}

void TtsHook::drain(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return (queue_.empty() && child_ < 0) || disabled_; });
}

bool TtsHook::launch(const std::string& text) {
    int fds[2];
    if (::pipe2(fds, O_CLOEXEC) != 0) return false;
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, fds[0], STDIN_FILENO);
    posix_spawnattr_t attr;
    posix_spawnattr_init(&attr);
    posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
    posix_spawnattr_setpgroup(&attr, 0);
    std::string sh = "/bin/sh", dash_c = "-c";
    char* argv[] = {sh.data(), dash_c.data(), command_.data(), nullptr};
    pid_t pid = -1;
    const int rc = posix_spawn(&pid, "/bin/sh", &actions, &attr, argv, environ);
    posix_spawn_file_actions_destroy(&actions);
    posix_spawnattr_destroy(&attr);
    ::close(fds[0]);
    if (rc != 0) {
        ::close(fds[1]);
        return false;
    }
    const auto payload = text + "\n";
    std::size_t off = 0;
    while (off < payload.size()) {
        auto n = ::write(fds[1], payload.data() + off, payload.size() - off);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) break;  // the command closed its input
        off += static_cast<std::size_t>(n);
    }
    ::close(fds[1]);
    std::lock_guard lock(mu_);
    child_ = pid;
    launched_.fetch_add(1);
    return true;
}

void TtsHook::reap(bool kill_first) {
    int pid;
    {
        std::lock_guard lock(mu_);
        pid = child_;
    }
    if (pid < 0) return;
    if (kill_first) ::kill(-pid, SIGTERM);
    int status = 0;
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {}
    if (!kill_first && WIFEXITED(status) && WEXITSTATUS(status) == 127 && !disabled_.exchange(true))
        warnings_ << "warning: speech command could not be run; speech disabled\n";
    {
        std::lock_guard lock(mu_);
        child_ = -1;
    }
    cv_.notify_all();
}

void TtsHook::run() {
    for (;;) {
        std::string text;
        {
            std::unique_lock lock(mu_);
            cv_.wait(lock, [&] { return stop_ || !queue_.empty(); });
            if (stop_) return;
            text = std::move(queue_.front());
            queue_.pop_front();
            interrupt_pending_ = false;
        }
        if (disabled_) continue;
        if (!launch(text)) {
            if (!disabled_.exchange(true)) warnings_ << "warning: speech command could not be launched; speech disabled\n";
            cv_.notify_all();
            continue;
        }
        // wait for the utterance, cutting it short on interrupt or shutdown
        for (;;) {
            int pid;
            bool cut;
            {
                std::unique_lock lock(mu_);
                pid = child_;
                cut = stop_ || interrupt_pending_;
            }
            if (cut) {
                reap(true);
                break;
            }
            int status = 0;
            const auto done = ::waitpid(pid, &status, WNOHANG);
            if (done == pid) {
                if (WIFEXITED(status) && WEXITSTATUS(status) == 127 && !disabled_.exchange(true))
                    warnings_ << "warning: speech command could not be run; speech disabled\n";
                {
                    std::lock_guard lock(mu_);
                    child_ = -1;
                }
                cv_.notify_all();
                break;
            }
            std::unique_lock lock(mu_);
            cv_.wait_for(lock, std::chrono::milliseconds(5), [&] { return stop_ || interrupt_pending_; });
        }
    }
}

// ---- session ---------------------------------------------------------------

namespace {

struct Inbound {
    std::mutex mu;
    std::condition_variable cv;
    std::vector<wire::ResultMsg> results;
    std::optional<wire::Stats> stats;
    std::uint64_t stats_replies = 0;
    std::uint32_t newest_result_seq = 0;
    bool disconnected = false;
    bool protocol_error = false;
};

template <class T>
std::optional<T> await(net::TcpStream& stream, std::chrono::milliseconds timeout, std::ostream& err) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < deadline) {
        auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        auto msg = stream.receive(std::max(left, std::chrono::milliseconds(1)));
        if (!msg) continue;
        if (auto* v = std::get_if<T>(&*msg)) return *v;
        if (auto* e = std::get_if<wire::Error>(&*msg)) {
            err << "server error " << static_cast<int>(e->code) << ": " << e->message << "\n";
            if (e->code == wire::ErrorCode::UnsupportedVersion || e->code == wire::ErrorCode::Malformed)
                throw net::ProtocolError(e->message);
        }
    }
    return std::nullopt;
}

}  // namespace

SessionReport run_session(const ClientOptions& opt, std::ostream& out, std::ostream& err, const std::atomic<bool>* stop) {
    SessionReport report;
    auto stop_requested = [&] { return stop && stop->load(); };

    net::HostPort where;
    std::unique_ptr<FrameSource> source;
    try {
        where = net::parse_host_port(opt.server);
        if (!(opt.fps > 0)) throw std::invalid_argument("fps must be positive");
        source = make_source(opt.source, opt.loop);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        report.exit_code = kExitBadArgs;
        return report;
    }

    std::optional<net::TcpStream> stream;
    try {
        stream.emplace(net::TcpStream::connect(where));
    } catch (const net::ConnectError& e) {
        err << "error: " << e.what() << "\n";
        report.exit_code = kExitConnect;
        return report;
    }

    try {
        stream->send(wire::Hello{wire::kProtocolVersion, wire::Role::Source, opt.name});
        auto ack = await<wire::HelloAck>(*stream, std::chrono::seconds(5), err);
        if (!ack) throw net::ProtocolError("no HELLO_ACK from server");
        report.session_id = ack->session_id;
        if (opt.processor) {
            stream->send(wire::SetProcessor{0, *opt.processor, opt.options});
            auto pack = await<wire::SetProcessorAck>(*stream, std::chrono::seconds(5), err);
            if (!pack) throw net::ProtocolError("no SET_PROCESSOR_ACK from server");
            report.processor_ack = pack;
            if (pack->status != wire::AckStatus::Ok)
                err << "processor '" << *opt.processor << "' rejected (" << wire::to_string(pack->status)
                    << "); continuing with the server default\n";
        }
    } catch (const net::ProtocolError& e) {
        err << "protocol error: " << e.what() << "\n";
        report.exit_code = kExitProtocol;
        return report;
    } catch (const net::Disconnected& e) {
        err << "error: " << e.what() << "\n";
        report.exit_code = kExitDisconnected;
        return report;
    }

    std::unique_ptr<TtsHook> tts;
    if (opt.tts_cmd) tts = std::make_unique<TtsHook>(*opt.tts_cmd, err);

    Inbound inbound;
    std::atomic<bool> finished{false};
    std::thread receiver([&] {
        try {
            while (!finished) {
                auto msg = stream->receive(std::chrono::milliseconds(50));
                if (!msg) continue;
                if (auto* r = std::get_if<wire::ResultMsg>(&*msg)) {
                    if (auto line = transcript_line(*r)) {
                        out << *line << '\n' << std::flush;
                        if (tts) tts->say(r->description->text, r->description->priority);
                    }
                    std::lock_guard lock(inbound.mu);
                    inbound.newest_result_seq = std::max(inbound.newest_result_seq, r->frame_seq);
                    inbound.results.push_back(std::move(*r));
                } else if (auto* s = std::get_if<wire::Stats>(&*msg)) {
                    err << "[stats] session=" << s->session_id << " received=" << s->frames_received
                        << " processed=" << s->frames_processed << " dropped=" << s->frames_dropped
                        << " suppressed=" << s->descriptions_suppressed << "\n";
                    std::lock_guard lock(inbound.mu);
                    inbound.stats = *s;
                    ++inbound.stats_replies;
                } else if (auto* e = std::get_if<wire::Error>(&*msg)) {
                    err << "server error " << static_cast<int>(e->code) << ": " << e->message << "\n";
                } else if (auto* a = std::get_if<wire::SetProcessorAck>(&*msg)) {
                    err << "processor now " << a->id << " (" << wire::to_string(a->status) << ")\n";
                }
                inbound.cv.notify_all();
            }
        } catch (const net::ProtocolError& e) {
            err << "protocol error: " << e.what() << "\n";
            std::lock_guard lock(inbound.mu);
            inbound.protocol_error = true;
        } catch (const net::Disconnected& e) {
            if (!finished) err << "error: " << e.what() << "\n";
            std::lock_guard lock(inbound.mu);
            inbound.disconnected = !finished;
        }
        inbound.cv.notify_all();
    });

    auto broken = [&] {
        std::lock_guard lock(inbound.mu);
        return inbound.disconnected || inbound.protocol_error;
    };

    const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(1.0 / opt.fps));
    const auto stats_period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(opt.stats_interval_s));
    const auto start = std::chrono::steady_clock::now();
    auto last_stats = start;
    auto last_send = start;
    for (std::uint64_t i = 0; !stop_requested() && !broken(); ++i) {
        if (opt.max_frames && i >= opt.max_frames) break;
        std::this_thread::sleep_until(start + period * static_cast<std::int64_t>(i));
        std::optional<Frame> frame;
        try {
            frame = source->next();
        } catch (const SourceError& e) {
            err << "error: " << e.what() << "\n";
            break;
        }
        if (!frame) break;
        try {
            stream->send(wire::FrameMsg::from(*frame));
        } catch (const net::Disconnected& e) {
            err << "error: " << e.what() << "\n";
            std::lock_guard lock(inbound.mu);
            inbound.disconnected = true;
            break;
        }
        last_send = std::chrono::steady_clock::now();
        ++report.frames_sent;
        report.last_seq_sent = frame->seq();
        if (opt.stats_interval_s > 0 && last_send - last_stats >= stats_period) {
            last_stats = last_send;
            try {
                stream->send(wire::StatsRequest{0});
            } catch (const net::Disconnected&) {}
        }
    }
    report.send_duration = report.frames_sent > 0 ? last_send - start : std::chrono::steady_clock::duration{};

    if (!broken()) {
        std::unique_lock lock(inbound.mu);
        if (report.frames_sent > 0)
            inbound.cv.wait_for(lock, opt.trailing_wait, [&] {
                return inbound.newest_result_seq >= report.last_seq_sent || inbound.disconnected || inbound.protocol_error;
            });
        const auto before = inbound.stats_replies;
        lock.unlock();
        try {
            stream->send(wire::StatsRequest{0});
            lock.lock();
            inbound.cv.wait_for(lock, std::chrono::seconds(2), [&] {
                return inbound.stats_replies > before || inbound.disconnected || inbound.protocol_error;
            });
            if (inbound.stats_replies > before) report.final_stats = inbound.stats;
            lock.unlock();
        } catch (const net::Disconnected&) {
        }
    }

    finished = true;
    receiver.join();
    stream->shutdown();
    if (tts) tts->drain(std::chrono::seconds(5));

    {
        std::lock_guard lock(inbound.mu);
        report.results = std::move(inbound.results);
        if (inbound.protocol_error) report.exit_code = kExitProtocol;
        else if (inbound.disconnected) report.exit_code = kExitDisconnected;
    }
    return report;
}

}  // namespace relay::client
