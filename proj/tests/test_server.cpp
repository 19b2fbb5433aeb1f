#include <doctest.h>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "relay/server.hpp"
#include "support.hpp"

using namespace relay;
using namespace relay::test;
using namespace std::chrono_literals;

namespace {

wire::Stats stats_of(Peer& p, std::uint32_t target = 0) {
    p.send(wire::StatsRequest{target});
    return p.expect<wire::Stats>();
}

/// Sends frames one at a time, waiting for each result.
wire::ResultMsg roundtrip(Peer& p, std::uint32_t seq, std::uint8_t fill = 0) {
    p.send(wire::FrameMsg::from(gray_frame(seq, 32, 24, fill)));
    for (;;) {
        auto r = p.expect<wire::ResultMsg>();
        if (r.frame_seq == seq) return r;
    }
}

}  // namespace

TEST_CASE("dedup_filter rules") {
    DedupPolicy p;
    const auto t0 = SteadyClock::time_point{} + 1h;
    Description routine{"same", Priority::Routine, "x", 1};
    Description interrupt{"same", Priority::Interrupt, "x", 1};
    CHECK(dedup_filter(routine, p, t0));
    CHECK_FALSE(dedup_filter(routine, p, t0 + 4999ms));
    CHECK(dedup_filter(routine, p, t0 + 5000ms));
    CHECK(dedup_filter(interrupt, p, t0 + 5001ms));
    CHECK(dedup_filter(interrupt, p, t0 + 5002ms));
    CHECK(dedup_filter(Description{"other", Priority::Routine, "x", 2}, p, t0 + 5003ms));
}

TEST_CASE("sessions, hello and version errors") {
    TestServer ts;
    Peer a(ts.tcp_port());
    Peer b(ts.tcp_port());
    const auto ida = a.hello();
    const auto idb = b.hello();
    CHECK(idb == ida + 1);

    Peer bad(ts.tcp_port());
    bad.send(wire::Hello{9, wire::Role::Source, "old"});
    auto err = bad.expect<wire::Error>();
    CHECK(err.code == wire::ErrorCode::UnsupportedVersion);
    CHECK_THROWS_AS(bad.next(2000ms), net::Disconnected);

    Peer early(ts.tcp_port());
    early.send(wire::Ping{});
    CHECK(early.expect<wire::Error>().code == wire::ErrorCode::Malformed);

    Peer console(ts.tcp_port());
    console.hello(wire::Role::Console);
    console.send(wire::FrameMsg::from(gray_frame(1)));
    CHECK(console.expect<wire::Error>().code == wire::ErrorCode::Malformed);
    console.send(wire::Ping{{1, 2, 3, 4, 5, 6, 7, 8}});
    CHECK(console.expect<wire::Pong>().token == wire::Token{1, 2, 3, 4, 5, 6, 7, 8});
}

TEST_CASE("frames are processed and counted") {
    TestServer ts;
    Peer p(ts.tcp_port());
    const auto id = p.hello();
    CHECK(stats_of(p) == wire::Stats{id, 0, 0, 0, 0});
    auto r = roundtrip(p, 1);
    CHECK(r.processor_id == "scene_change");
    auto s = stats_of(p);
    CHECK(s.frames_received == 1);
    CHECK(s.frames_processed == 1);

    // RGB header with a GRAY-sized payload
    wire::FrameMsg bad = wire::FrameMsg::from(gray_frame(2, 8, 8));
    bad.format = 1;
    p.send(bad);
    CHECK(p.expect<wire::Error>().code == wire::ErrorCode::Malformed);
    s = stats_of(p);
    CHECK(s.frames_received == 2);
    CHECK(s.frames_processed == 1);
    CHECK(s.frames_dropped == 0);

    wire::FrameMsg huge;
    huge.seq = 3;
    huge.width = 5000;
    huge.height = 1;
    huge.payload.resize(5000);
    p.send(huge);
    CHECK(p.expect<wire::Error>().code == wire::ErrorCode::FrameTooLarge);

    p.send(wire::FrameMsg::from(gray_frame(1)));
    CHECK(p.expect<wire::Error>().code == wire::ErrorCode::Malformed);
}

TEST_CASE("processor list and switching") {
    TestServer ts;
    Peer p(ts.tcp_port());
    const auto id = p.hello();
    p.send(wire::ListProcessors{});
    auto list = p.expect<wire::ProcessorList>();
    REQUIRE(list.entries.size() == 8);
    CHECK(list.entries[0].id == "scene_change");
    CHECK(list.entries[4].flags == 1);

    p.send(wire::SetProcessor{0, "nope", ""});
    auto ack = p.expect<wire::SetProcessorAck>();
    CHECK(ack.status == wire::AckStatus::UnknownId);
    CHECK(roundtrip(p, 1).processor_id == "scene_change");

    p.send(wire::SetProcessor{0, "find_item", "term="});
    CHECK(p.expect<wire::SetProcessorAck>().status == wire::AckStatus::BadOptions);

    p.send(wire::SetProcessor{0, "blob_detect", ""});
    ack = p.expect<wire::SetProcessorAck>();
    CHECK(ack.status == wire::AckStatus::Ok);
    CHECK(ack.target_session == id);
    CHECK(roundtrip(p, 2).processor_id == "blob_detect");
}

TEST_CASE("console steering, listing and mirroring") {
    TestServer ts;
    Peer src(ts.tcp_port());
    const auto sid = src.hello(wire::Role::Source, "glasses");
    Peer con(ts.tcp_port());
    const auto cid = con.hello(wire::Role::Console, "ops");

    con.send(wire::SessionListRequest{});
    auto sessions = con.expect<wire::SessionList>();
    REQUIRE(sessions.entries.size() == 1);
    CHECK(sessions.entries[0] == wire::SessionEntry{sid, "glasses", "scene_change"});

    con.send(wire::Subscribe{999});
    CHECK(con.expect<wire::SubscribeAck>().status == wire::AckStatus::NoSuchSession);
    con.send(wire::Subscribe{sid});
    CHECK(con.expect<wire::SubscribeAck>().status == wire::AckStatus::Ok);

    con.send(wire::SetProcessor{cid, "blob_detect", ""});
    CHECK(con.expect<wire::SetProcessorAck>().status == wire::AckStatus::NotPermitted);
    con.send(wire::SetProcessor{999, "blob_detect", ""});
    CHECK(con.expect<wire::SetProcessorAck>().status == wire::AckStatus::NoSuchSession);

    con.send(wire::SetProcessor{sid, "blob_detect", ""});
    auto ack = con.expect<wire::SetProcessorAck>();
    CHECK(ack.status == wire::AckStatus::Ok);
    CHECK(src.expect<wire::SetProcessorAck>() == ack);

    auto r = roundtrip(src, 1);
    CHECK(r.processor_id == "blob_detect");
    auto mirrored = con.expect<wire::ResultMsg>();
    CHECK(wire::encode_body(mirrored) == wire::encode_body(r));

    con.send(wire::StatsRequest{sid});
    CHECK(con.expect<wire::Stats>().frames_processed == 1);
    con.send(wire::StatsRequest{12345});
    CHECK(con.expect<wire::Error>().code == wire::ErrorCode::Malformed);
}

TEST_CASE("repeated routine speech is suppressed") {
    auto now = std::make_shared<std::atomic<std::int64_t>>(0);
    ServerConfig cfg;
    cfg.dedup_clock = [now] { return SteadyClock::time_point{} + 1h + std::chrono::milliseconds(now->load()); };
    TestServer ts(cfg);
    Peer p(ts.tcp_port());
    p.hello();
    p.send(wire::SetProcessor{0, "say", "text=door"});
    p.expect<wire::SetProcessorAck>();
    CHECK(roundtrip(p, 1).description);
    now->store(1000);
    CHECK_FALSE(roundtrip(p, 2).description);
    now->store(6000);
    CHECK(roundtrip(p, 3).description);
    CHECK(stats_of(p).descriptions_suppressed == 1);

    p.send(wire::SetProcessor{0, "say", "text=door;priority=interrupt"});
    p.expect<wire::SetProcessorAck>();
    now->store(7000);
    CHECK(roundtrip(p, 4).description);
    CHECK(roundtrip(p, 5).description);
}

TEST_CASE("a failing processor reports and recovers") {
    TestServer ts;
    Peer p(ts.tcp_port());
    p.hello();
    p.send(wire::SetProcessor{0, "fail", ""});
    p.expect<wire::SetProcessorAck>();
    p.send(wire::FrameMsg::from(gray_frame(1)));
    auto err = p.expect<wire::Error>();
    CHECK(err.code == wire::ErrorCode::Internal);
    auto r = p.expect<wire::ResultMsg>();
    REQUIRE(r.description);
    CHECK(r.description->text == "processor error: fail");
    CHECK(r.description->priority == Priority::Interrupt);
    CHECK(roundtrip(p, 2).frame_seq == 2);
}

TEST_CASE("malformed input closes the connection") {
    TestServer ts;
    Peer p(ts.tcp_port());
    p.hello();
    const Bytes junk{3, 0, 0, 0, 0xFF, 0, 0};
    p.stream().send_bytes(junk);
    CHECK(p.expect<wire::Error>().code == wire::ErrorCode::Malformed);
    CHECK_THROWS_AS(p.next(2000ms), net::Disconnected);
}

TEST_CASE("websocket transport speaks the same protocol") {
    namespace beast = boost::beast;
    namespace websocket = beast::websocket;
    using tcp = boost::asio::ip::tcp;

    TestServer ts;
    boost::asio::io_context ioc;
    websocket::stream<tcp::socket> ws(ioc);
    ws.next_layer().connect({boost::asio::ip::make_address("127.0.0.1"), ts.ws_port()});
    ws.handshake("127.0.0.1", "/");
    ws.binary(true);

    auto send = [&](const wire::Message& m) {
        const auto body = wire::encode_body(m);
        ws.write(boost::asio::buffer(body));
    };
    auto recv = [&]() {
        beast::flat_buffer buf;
        ws.read(buf);
        auto data = static_cast<const std::uint8_t*>(buf.data().data());
        auto out = wire::decode_exact(ByteView(data, buf.size()));
        REQUIRE(std::holds_alternative<wire::Complete>(out));
        return std::get<wire::Complete>(out).message;
    };

    send(wire::Hello{1, wire::Role::Console, "browser"});
    auto ack = recv();
    REQUIRE(std::holds_alternative<wire::HelloAck>(ack));

    Peer src(ts.tcp_port());
    const auto sid = src.hello();
    send(wire::Subscribe{sid});
    auto sub = recv();
    REQUIRE(std::holds_alternative<wire::SubscribeAck>(sub));
    CHECK(std::get<wire::SubscribeAck>(sub).status == wire::AckStatus::Ok);

    auto r = roundtrip(src, 1);
    auto mirrored = recv();
    REQUIRE(std::holds_alternative<wire::ResultMsg>(mirrored));
    CHECK(std::get<wire::ResultMsg>(mirrored) == r);

    send(wire::ListProcessors{});
    auto list = recv();
    REQUIRE(std::holds_alternative<wire::ProcessorList>(list));
    ws.close(websocket::close_code::normal);
}

TEST_CASE("stop with live connections") {
    TestServer ts;
    Peer p(ts.tcp_port());
    p.hello();
    p.send(wire::SetProcessor{0, "slow", "delay_ms=200"});
    p.expect<wire::SetProcessorAck>();
    p.send(wire::FrameMsg::from(gray_frame(1)));
    std::this_thread::sleep_for(50ms);
    const auto t0 = Clock::now();
    ts.server().stop();
    CHECK(Clock::now() - t0 < 2s);
}
