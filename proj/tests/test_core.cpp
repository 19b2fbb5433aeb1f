#include <doctest.h>

#include "relay/core.hpp"
#include "support.hpp"

using namespace relay;

TEST_CASE("luma fixed points") {
    CHECK(luma(0, 0, 0) == 0);
    CHECK(luma(255, 255, 255) == 255);
    CHECK(luma(255, 0, 0) == 77);
    CHECK(luma(0, 255, 0) == 149);
    CHECK(luma(0, 0, 255) == 29);
}

TEST_CASE("luma is monotone in each channel and the identity on grays") {
    for (int v = 0; v < 256; ++v) CHECK(luma(v, v, v) == v);
    for (int v = 0; v < 255; ++v) {
        CHECK(luma(v, 100, 100) <= luma(v + 1, 100, 100));
        CHECK(luma(100, v, 100) <= luma(100, v + 1, 100));
        CHECK(luma(100, 100, v) <= luma(100, 100, v + 1));
    }
}

TEST_CASE("luma_plane of an RGB frame") {
    Frame f(1, 0, 2, 1, PixelFormat::Rgb8, {255, 0, 0, 10, 10, 10});
    CHECK(luma_plane(f) == Bytes{77, 10});
    Frame g(1, 0, 2, 1, PixelFormat::Gray8, {3, 4});
    CHECK(luma_plane(g) == Bytes{3, 4});
}

TEST_CASE("egocentric direction examples") {
    CHECK(egocentric_direction(0.5, 0.5) == EgocentricDirection{HBand::Center, VBand::Middle});
    CHECK(egocentric_direction(0.1, 0.9) == EgocentricDirection{HBand::Left, VBand::Bottom});
    CHECK(egocentric_direction(1.0 / 3.0, 2.0 / 3.0) == EgocentricDirection{HBand::Center, VBand::Middle});
}

TEST_CASE("egocentric direction agrees with the if-chain on a 101x101 grid") {
    int mismatches = 0;
    for (int i = 0; i <= 100; ++i)
        for (int j = 0; j <= 100; ++j) {
            const double cx = i / 100.0, cy = j / 100.0;
            const auto d = egocentric_direction(cx, cy);
            const auto [h, v] = test::thirds_oracle(cx, cy);
            if (std::string(to_string(d.hband)) != h || std::string(to_string(d.vband)) != v) ++mismatches;
        }
    CHECK(mismatches == 0);
    CHECK_THROWS_AS(egocentric_direction(-0.1, 0.5), ContractViolation);
    CHECK_THROWS_AS(egocentric_direction(0.5, 1.5), ContractViolation);
}

TEST_CASE("validate_frame") {
    CHECK(validate_frame(8, 8, 0, 64) == FrameCheck::Ok);
    CHECK(validate_frame(8, 8, 1, 64) == FrameCheck::Length);
    CHECK(validate_frame(8, 8, 1, 192) == FrameCheck::Ok);
    CHECK(validate_frame(0, 8, 0, 0) == FrameCheck::Dims);
    CHECK(validate_frame(4097, 1, 0, 4097) == FrameCheck::Dims);
    CHECK(validate_frame(4096, 1, 0, 4096) == FrameCheck::Ok);
    CHECK(validate_frame(2, 2, 7, 4) == FrameCheck::Format);
    CHECK_THROWS_AS(Frame(1, 0, 8, 8, PixelFormat::Rgb8, Bytes(64)), ContractViolation);
}

TEST_CASE("annotation centers") {
    auto c = annotation_center(Annotation::box("x", 1, 0, 0, 1, 1));
    CHECK(c.first == doctest::Approx(0.5));
    CHECK(c.second == doctest::Approx(0.5));
    c = annotation_center(Annotation::point("x", 1, 0.25, 0.75));
    CHECK(c.first == doctest::Approx(0.25).epsilon(1e-4));
    CHECK(c.second == doctest::Approx(0.75).epsilon(1e-4));
    c = annotation_center(Annotation::box("x", 1, 0.2, 0.2, 0.4, 0.6));
    CHECK(c.first == doctest::Approx(0.3).epsilon(1e-4));
    CHECK(c.second == doctest::Approx(0.4).epsilon(1e-4));
    CHECK_THROWS_AS(annotation_center(Annotation::text_label("x", 1, 0.5, 0.5)), ContractViolation);
    CHECK_THROWS_AS(Annotation::box("x", 1, 0.6, 0, 0.4, 1), ContractViolation);
}

TEST_CASE("quantization round trip bounds") {
    for (int i = 0; i <= 100000; ++i) {
        const double v = i / 100000.0;
        CHECK(std::fabs(dequantize_coord(quantize_coord(v)) - v) <= 1.0 / 65535);
        CHECK(std::fabs(dequantize_confidence(quantize_confidence(v)) - v) <= 1.0 / 10000);
    }
    CHECK(quantize_coord(1.0) == 65535);
    CHECK(quantize_confidence(1.0) == 10000);
    CHECK_THROWS_AS(quantize_coord(1.01), ContractViolation);
    CHECK_THROWS_AS(quantize_confidence(-0.5), ContractViolation);
}

TEST_CASE("utf8 helpers") {
    CHECK(is_valid_utf8("abc"));
    CHECK(is_valid_utf8("\xC3\xA9"));
    CHECK_FALSE(is_valid_utf8("\xC3"));
    CHECK_FALSE(is_valid_utf8("\xFF"));
    CHECK_FALSE(is_valid_utf8("\xED\xA0\x80"));  // surrogate
    CHECK(truncate_utf8("a\xE2\x82\xAC", 3) == "a");
    CHECK(truncate_utf8("abc", 2) == "ab");
}
