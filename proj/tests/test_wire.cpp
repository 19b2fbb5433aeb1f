#include <doctest.h>

#include "relay/wire.hpp"
#include "support.hpp"

using namespace relay;
using namespace relay::wire;

namespace {

Bytes hex(std::initializer_list<int> v) {
    Bytes b;
    for (int x : v) b.push_back(static_cast<std::uint8_t>(x));
    return b;
}

}  // namespace

TEST_CASE("PING layout and TCP framing") {
    Ping p{{1, 2, 3, 4, 5, 6, 7, 8}};
    CHECK(encode_body(p) == hex({0x0A, 1, 2, 3, 4, 5, 6, 7, 8}));
    CHECK(encode_frame(p) == hex({0x09, 0, 0, 0, 0x0A, 1, 2, 3, 4, 5, 6, 7, 8}));
}

TEST_CASE("HELLO with an empty name") {
    CHECK(encode_body(Hello{1, Role::Source, ""}) == hex({0x01, 0x01, 0x00, 0x00, 0x00}));
}

TEST_CASE("SET_PROCESSOR round trip") {
    Message m = SetProcessor{0, "find_item", "term=KEYS"};
    auto out = decode_frame(encode_frame(m));
    auto* c = std::get_if<Complete>(&out);
    REQUIRE(c);
    CHECK(c->message == m);
    CHECK(c->consumed == encode_frame(m).size());
}

TEST_CASE("incomplete length prefix needs more") {
    auto out = decode_frame(hex({0x09, 0x00, 0x00}));
    auto* n = std::get_if<NeedMore>(&out);
    REQUIRE(n);
    CHECK(n->bytes >= 1);
}

TEST_CASE("unknown type code is malformed") {
    CHECK(std::holds_alternative<Malformed>(decode_body(hex({0xFF, 1, 2, 3}))));
    CHECK(std::holds_alternative<Malformed>(decode_frame(hex({4, 0, 0, 0, 0xFF, 1, 2, 3}))));
    CHECK(std::holds_alternative<Malformed>(decode_frame(hex({0, 0, 0, 0}))));
}

TEST_CASE("length prefix above 16 MiB is malformed and oversize") {
    auto out = decode_frame(hex({0x01, 0x00, 0x00, 0x01}));
    auto* m = std::get_if<Malformed>(&out);
    REQUIRE(m);
    CHECK(m->oversize);
}

TEST_CASE("trailing bytes are untouched") {
    auto bytes = encode_frame(Ping{});
    const auto one = bytes.size();
    auto second = encode_frame(StatsRequest{3});
    bytes.insert(bytes.end(), second.begin(), second.end());
    auto out = decode_frame(bytes);
    REQUIRE(std::holds_alternative<Complete>(out));
    CHECK(std::get<Complete>(out).consumed == one);
    CHECK(std::holds_alternative<Malformed>(decode_exact(bytes)));
}

TEST_CASE("content rules are enforced on decode") {
    // role 2
    CHECK(std::holds_alternative<Malformed>(decode_body(hex({0x01, 0x01, 0x02, 0x00, 0x00}))));
    // string runs past the end of an exact body
    CHECK(std::holds_alternative<Malformed>(decode_exact(hex({0x01, 0x01, 0x00, 0x05, 0x00, 'a'}))));
    // invalid UTF-8 in a name
    CHECK(std::holds_alternative<Malformed>(decode_body(hex({0x01, 0x01, 0x00, 0x01, 0x00, 0xFF}))));
    // error code 0
    CHECK(std::holds_alternative<Malformed>(decode_body(hex({0x09, 0x00, 0x00, 0x00}))));
    // subscribe ack status 1
    CHECK(std::holds_alternative<Malformed>(decode_body(hex({0x11, 1, 0, 0, 0, 1}))));
}

TEST_CASE("encode rejects values that cannot be represented") {
    ResultMsg r;
    r.processor_id = "x";
    r.description = Speech{std::string(kMaxDescriptionBytes + 1, 'a'), Priority::Routine};
    CHECK_THROWS_AS(encode_body(r), EncodeError);
    r.description = Speech{"", Priority::Routine};
    CHECK_THROWS_AS(encode_body(r), EncodeError);
    r.description.reset();
    r.annotations.assign(kMaxAnnotations + 1, Annotation::point("p", 1, 0, 0));
    CHECK_THROWS_AS(encode_body(r), EncodeError);
    CHECK_THROWS_AS(encode_body(Hello{1, Role::Source, std::string(70000, 'a')}), EncodeError);
}

TEST_CASE("random messages round trip canonically") {
    test::Gen gen(42);
    for (int i = 0; i < 2000; ++i) {
        const auto m = gen.message();
        const auto body = encode_body(m);
        auto out = decode_exact(body);
        auto* c = std::get_if<Complete>(&out);
        REQUIRE(c);
        CHECK(c->message == m);
        CHECK(encode_body(c->message) == body);
    }
}

TEST_CASE("every strict prefix needs more") {
    test::Gen gen(7);
    for (int i = 0; i < 200; ++i) {
        const auto framed = encode_frame(gen.message());
        for (std::size_t k = 0; k < framed.size(); ++k)
            REQUIRE(std::holds_alternative<NeedMore>(decode_frame(ByteView(framed.data(), k))));
        const auto body = encode_body(gen.message());
        for (std::size_t k = 0; k < body.size(); ++k)
            REQUIRE(std::holds_alternative<NeedMore>(decode_body(ByteView(body.data(), k))));
    }
}

TEST_CASE("random bytes never crash the decoders") {
    test::Gen gen(99);
    std::size_t complete = 0;
    for (int i = 0; i < 20000; ++i) {
        Bytes buf(gen.u(0, 48));
        for (auto& b : buf) b = static_cast<std::uint8_t>(gen.u(0, 255));
        if (std::holds_alternative<Complete>(decode_frame(buf))) ++complete;
        (void)decode_body(buf);
        (void)decode_exact(buf);
    }
    CHECK(complete < 20000);
}
