#pragma once

// Value types shared by the codec, the processor framework and the built-in
// processors. Everything here is immutable after construction.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace relay {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Raised when a caller breaks an operation's precondition.
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class PixelFormat : std::uint8_t { Gray8 = 0, Rgb8 = 1 };

constexpr std::size_t bytes_per_pixel(PixelFormat f) noexcept {
    return f == PixelFormat::Rgb8 ? 3 : 1;
}

std::optional<PixelFormat> pixel_format_from_code(std::uint8_t code) noexcept;

inline constexpr std::uint32_t kMaxFrameDimension = 4096;
inline constexpr std::size_t kMaxAnnotations = 256;
inline constexpr std::size_t kMaxDescriptionBytes = 1024;

enum class FrameCheck { Ok, Dims, Format, Length };

std::string_view to_string(FrameCheck c) noexcept;

/// Checks the geometry of a frame against its payload size. The format is
/// passed as its raw wire code so unknown formats are reportable.
FrameCheck validate_frame(std::uint32_t width, std::uint32_t height, std::uint8_t format,
                          std::size_t payload_len) noexcept;

/// One captured image. Row-major, no padding.
class Frame {
public:
    /// Throws ContractViolation unless validate_frame accepts the geometry.
    Frame(std::uint32_t seq, std::uint64_t capture_ts_us, std::uint32_t width,
          std::uint32_t height, PixelFormat format, Bytes pixels);

    std::uint32_t seq() const noexcept { return seq_; }
    std::uint64_t capture_ts_us() const noexcept { return capture_ts_us_; }
    std::uint32_t width() const noexcept { return width_; }
    std::uint32_t height() const noexcept { return height_; }
    PixelFormat format() const noexcept { return format_; }
    ByteView pixels() const noexcept { return pixels_; }

    bool operator==(const Frame&) const = default;

private:
    std::uint32_t seq_;
    std::uint64_t capture_ts_us_;
    std::uint32_t width_;
    std::uint32_t height_;
    PixelFormat format_;
    Bytes pixels_;
};

/// Integer Rec.601-style luma: (77r + 150g + 29b + 128) >> 8.
constexpr std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept {
    return static_cast<std::uint8_t>((77u * r + 150u * g + 29u * b + 128u) >> 8);
}

/// Single-channel copy of the frame (the pixels themselves for GRAY8).
Bytes luma_plane(const Frame& f);

// Wire quantization. Coordinates use 1/65535 steps, confidences 1/10000.
inline constexpr std::uint32_t kCoordScale = 65535;
inline constexpr std::uint32_t kConfidenceScale = 10000;

std::uint16_t quantize_coord(double v);
double dequantize_coord(std::uint16_t q) noexcept;
std::uint16_t quantize_confidence(double v);
double dequantize_confidence(std::uint16_t q) noexcept;

enum class AnnotationKind : std::uint8_t { Box = 0, Point = 1, Polyline = 2, Label = 3 };

std::optional<AnnotationKind> annotation_kind_from_code(std::uint8_t code) noexcept;

struct QPoint {
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    bool operator==(const QPoint&) const = default;
};

/// Overlay metadata in normalized, quantized image coordinates.
struct Annotation {
    AnnotationKind kind = AnnotationKind::Label;
    std::string label;
    std::uint16_t confidence = 0;  // scaled by kConfidenceScale
    std::vector<QPoint> coords;    // scaled by kCoordScale

    bool operator==(const Annotation&) const = default;

    static Annotation box(std::string label, double confidence, double x0, double y0,
                          double x1, double y1);
    static Annotation point(std::string label, double confidence, double x, double y);
    static Annotation text_label(std::string label, double confidence, double x, double y);
};

/// Empty string when the kind/coordinate rules hold, otherwise the reason.
std::string annotation_problem(const Annotation& a);

/// Center of a BOX or POINT annotation in [0,1]^2.
std::pair<double, double> annotation_center(const Annotation& a);

enum class Priority : std::uint8_t { Routine = 0, Interrupt = 1 };

std::string_view to_string(Priority p) noexcept;

/// Text a processor wants spoken; the dispatcher turns it into a Description.
struct Speech {
    std::string text;
    Priority priority = Priority::Routine;
    bool operator==(const Speech&) const = default;
};

struct Description {
    std::string text;
    Priority priority = Priority::Routine;
    std::string source;
    std::uint32_t frame_seq = 0;
    bool operator==(const Description&) const = default;
};

enum class HBand { Left, Center, Right };
enum class VBand { Top, Middle, Bottom };

struct EgocentricDirection {
    HBand hband = HBand::Center;
    VBand vband = VBand::Middle;
    bool operator==(const EgocentricDirection&) const = default;
};

std::string_view to_string(HBand b) noexcept;
std::string_view to_string(VBand b) noexcept;

/// Thirds banding of a normalized point; boundaries fall into the center band.
EgocentricDirection egocentric_direction(double cx, double cy);

struct TimingBreakdown {
    std::uint32_t recv_to_dispatch_us = 0;
    std::uint32_t process_us = 0;
    bool operator==(const TimingBreakdown&) const = default;
};

/// Saturating microsecond count of a duration.
std::uint32_t saturating_us(std::chrono::steady_clock::duration d) noexcept;

struct ProcessResult {
    std::uint32_t frame_seq = 0;
    std::string processor;
    std::vector<Annotation> annotations;
    std::optional<Description> description;
    TimingBreakdown timing;
    bool operator==(const ProcessResult&) const = default;
};

/// Truncates to at most max_bytes without splitting a UTF-8 sequence.
std::string truncate_utf8(std::string_view s, std::size_t max_bytes);

bool is_valid_utf8(std::string_view s) noexcept;

}  // namespace relay
