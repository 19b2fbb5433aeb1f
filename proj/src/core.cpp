#include "relay/core.hpp"

#include <cmath>
#include <limits>

namespace relay {

std::optional<PixelFormat> pixel_format_from_code(std::uint8_t code) noexcept {
    switch (code) {
        case 0: return PixelFormat::Gray8;
        case 1: return PixelFormat::Rgb8;
        default: return std::nullopt;
    }
}

std::string_view to_string(FrameCheck c) noexcept {
    switch (c) {
        case FrameCheck::Ok: return "ok";
        case FrameCheck::Dims: return "dims";
        case FrameCheck::Format: return "format";
        case FrameCheck::Length: return "length";
    }
    return "?";
}

FrameCheck validate_frame(std::uint32_t width, std::uint32_t height, std::uint8_t format,
                          std::size_t payload_len) noexcept {
    if (width < 1 || height < 1 || width > kMaxFrameDimension || height > kMaxFrameDimension)
        return FrameCheck::Dims;
    auto fmt = pixel_format_from_code(format);
    if (!fmt) return FrameCheck::Format;
    if (payload_len != std::size_t{width} * height * bytes_per_pixel(*fmt)) return FrameCheck::Length;
    return FrameCheck::Ok;
}

Frame::Frame(std::uint32_t seq, std::uint64_t capture_ts_us, std::uint32_t width,
             std::uint32_t height, PixelFormat format, Bytes pixels)
    : seq_(seq),
      capture_ts_us_(capture_ts_us),
      width_(width),
      height_(height),
      format_(format),
      pixels_(std::move(pixels)) {
    auto check = validate_frame(width_, height_, static_cast<std::uint8_t>(format_), pixels_.size());
    if (check != FrameCheck::Ok)
        throw ContractViolation("invalid frame: " + std::string(to_string(check)));
}

Bytes luma_plane(const Frame& f) {
    auto px = f.pixels();
    if (f.format() == PixelFormat::Gray8) return Bytes(px.begin(), px.end());
    Bytes out(std::size_t{f.width()} * f.height());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = luma(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
    return out;
}

namespace {

std::uint16_t quantize(double v, std::uint32_t scale, const char* what) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
        throw ContractViolation(std::string(what) + " outside [0,1]");
    return static_cast<std::uint16_t>(std::lround(v * scale));
}

}  // namespace

std::uint16_t quantize_coord(double v) { return quantize(v, kCoordScale, "coordinate"); }
double dequantize_coord(std::uint16_t q) noexcept { return double(q) / kCoordScale; }
std::uint16_t quantize_confidence(double v) { return quantize(v, kConfidenceScale, "confidence"); }
double dequantize_confidence(std::uint16_t q) noexcept { return double(q) / kConfidenceScale; }

std::optional<AnnotationKind> annotation_kind_from_code(std::uint8_t code) noexcept {
    if (code > 3) return std::nullopt;
    return static_cast<AnnotationKind>(code);
}

Annotation Annotation::box(std::string label, double confidence, double x0, double y0,
                           double x1, double y1) {
    Annotation a{AnnotationKind::Box, std::move(label), quantize_confidence(confidence),
                 {{quantize_coord(x0), quantize_coord(y0)}, {quantize_coord(x1), quantize_coord(y1)}}};
    if (auto p = annotation_problem(a); !p.empty()) throw ContractViolation(p);
    return a;
}

Annotation Annotation::point(std::string label, double confidence, double x, double y) {
    return {AnnotationKind::Point, std::move(label), quantize_confidence(confidence),
            {{quantize_coord(x), quantize_coord(y)}}};
}

Annotation Annotation::text_label(std::string label, double confidence, double x, double y) {
    return {AnnotationKind::Label, std::move(label), quantize_confidence(confidence),
            {{quantize_coord(x), quantize_coord(y)}}};
}

std::string annotation_problem(const Annotation& a) {
    if (a.confidence > kConfidenceScale) return "confidence above 1";
    const auto n = a.coords.size();
    switch (a.kind) {
        case AnnotationKind::Box:
            if (n != 2) return "box needs exactly 2 coordinate pairs";
            if (a.coords[0].x > a.coords[1].x || a.coords[0].y > a.coords[1].y)
                return "box min corner exceeds max corner";
            return {};
        case AnnotationKind::Point:
            return n == 1 ? std::string{} : "point needs exactly 1 coordinate pair";
        case AnnotationKind::Polyline:
            return n >= 2 ? std::string{} : "polyline needs at least 2 coordinate pairs";
        case AnnotationKind::Label:
            return n == 1 ? std::string{} : "label needs exactly 1 anchor";
    }
    return "unknown annotation kind";
}

std::pair<double, double> annotation_center(const Annotation& a) {
    if (auto p = annotation_problem(a); !p.empty()) throw ContractViolation(p);
    switch (a.kind) {
        case AnnotationKind::Box:
            return {(dequantize_coord(a.coords[0].x) + dequantize_coord(a.coords[1].x)) / 2.0,
                    (dequantize_coord(a.coords[0].y) + dequantize_coord(a.coords[1].y)) / 2.0};
        case AnnotationKind::Point:
            return {dequantize_coord(a.coords[0].x), dequantize_coord(a.coords[0].y)};
        default:
            throw ContractViolation("annotation_center: unsupported kind");
    }
}

std::string_view to_string(Priority p) noexcept {
    return p == Priority::Interrupt ? "interrupt" : "routine";
}

std::string_view to_string(HBand b) noexcept {
    switch (b) {
        case HBand::Left: return "left";
        case HBand::Center: return "center";
        case HBand::Right: return "right";
    }
    return "?";
}

std::string_view to_string(VBand b) noexcept {
    switch (b) {
        case VBand::Top: return "top";
        case VBand::Middle: return "middle";
        case VBand::Bottom: return "bottom";
    }
    return "?";
}

EgocentricDirection egocentric_direction(double cx, double cy) {
    if (!std::isfinite(cx) || !std::isfinite(cy) || cx < 0.0 || cx > 1.0 || cy < 0.0 || cy > 1.0)
        throw ContractViolation("egocentric_direction: point outside the unit square");
    constexpr double lo = 1.0 / 3.0;
    constexpr double hi = 2.0 / 3.0;
    EgocentricDirection d;
    d.hband = cx < lo ? HBand::Left : cx > hi ? HBand::Right : HBand::Center;
    d.vband = cy < lo ? VBand::Top : cy > hi ? VBand::Bottom : VBand::Middle;
    return d;
}

std::uint32_t saturating_us(std::chrono::steady_clock::duration d) noexcept {
    auto us = std::chrono::duration_cast<std::chrono::microseconds>(d).count();
    if (us <= 0) return 0;
    if (us >= std::numeric_limits<std::uint32_t>::max()) return std::numeric_limits<std::uint32_t>::max();
    return static_cast<std::uint32_t>(us);
}

std::string truncate_utf8(std::string_view s, std::size_t max_bytes) {
    if (s.size() <= max_bytes) return std::string(s);
    std::size_t cut = max_bytes;
    // back off continuation bytes so the cut lands on a sequence start
    while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
    return std::string(s.substr(0, cut));
}

bool is_valid_utf8(std::string_view s) noexcept {
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t n;
        std::uint32_t cp;
        if (c < 0x80) { ++i; continue; }
        if ((c & 0xE0) == 0xC0) { n = 1; cp = c & 0x1F; }
        else if ((c & 0xF0) == 0xE0) { n = 2; cp = c & 0x0F; }
        else if ((c & 0xF8) == 0xF0) { n = 3; cp = c & 0x07; }
        else return false;
        if (i + n >= s.size()) return false;
        for (std::size_t k = 1; k <= n; ++k) {
            const auto cc = static_cast<unsigned char>(s[i + k]);
            if ((cc & 0xC0) != 0x80) return false;
            cp = (cp << 6) | (cc & 0x3F);
        }
        if ((n == 1 && cp < 0x80) || (n == 2 && cp < 0x800) || (n == 3 && cp < 0x10000)) return false;
        if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
        i += n + 1;
    }
    return true;
}

}  // namespace relay
