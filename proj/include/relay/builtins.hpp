#pragma once

// Built-in processors: scene change detection, blob detection, template OCR,
// term search with egocentric direction, and a remote VLM client.

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "relay/core.hpp"
#include "relay/processor.hpp"
#include "relay/remote_vlm.hpp"

namespace relay {

// ---- grayscale helpers -----------------------------------------------------

/// Row-major single-channel image.
struct GrayImage {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    Bytes pixels;

    GrayImage() = default;
    GrayImage(std::uint32_t w, std::uint32_t h, std::uint8_t fill = 0)
        : width(w), height(h), pixels(std::size_t{w} * h, fill) {}

    std::uint8_t at(std::uint32_t x, std::uint32_t y) const { return pixels[std::size_t{y} * width + x]; }
    std::uint8_t& at(std::uint32_t x, std::uint32_t y) { return pixels[std::size_t{y} * width + x]; }

    static GrayImage from_frame(const Frame& f);
    Frame to_frame(std::uint32_t seq, std::uint64_t ts_us = 0) const;
};

/// Mean absolute difference of two equally sized buffers.
double mad(ByteView a, ByteView b);

// ---- glyph font, rendering and recognition ---------------------------------

inline constexpr int kGlyphWidth = 5;
inline constexpr int kGlyphHeight = 7;
inline constexpr int kGlyphAdvance = 6;
inline constexpr int kLineAdvance = 8;

using GlyphMask = std::array<std::array<bool, kGlyphWidth>, kGlyphHeight>;

/// 5x7 masks for A-Z and 0-9, loaded from a text file: one record per glyph,
/// the character on its own line followed by 7 rows of '.'/'#'.
class GlyphFont {
public:
    static GlyphFont parse(std::string_view text);
    static GlyphFont load(const std::filesystem::path& path);

    /// The shipped font. Looked up via RELAY_GLYPH_FONT, then the install
    /// data directory; loaded once.
    static const GlyphFont& standard();

    const GlyphMask* find(char c) const noexcept;
    const std::vector<std::pair<char, GlyphMask>>& glyphs() const noexcept { return glyphs_; }

private:
    std::vector<std::pair<char, GlyphMask>> glyphs_;
};

class RenderError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Stamps text ([A-Z0-9 ]*) with its top-left glyph cell at (x, y).
void render_text(std::string_view text, int x, int y, GrayImage& canvas,
                 const GlyphFont& font = GlyphFont::standard());

/// Pixel width of rendered text: 6 per character minus the trailing gap.
int text_width(std::string_view text) noexcept;

struct PixelBox {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive
    bool operator==(const PixelBox&) const = default;
};

struct OcrToken {
    std::string text;
    PixelBox bbox;
    bool operator==(const OcrToken&) const = default;
};

/// Exact template matching at every pixel position; matches 6 px apart on one
/// row chain into a token. Tokens come out in (row, column) order.
std::vector<OcrToken> recognize(const GrayImage& luma, const GlyphFont& font = GlyphFont::standard(),
                                std::uint8_t threshold = 128);

// ---- blobs -----------------------------------------------------------------

struct Blob {
    PixelBox bbox;
    std::size_t area = 0;
    std::uint32_t id = 0;  // label in raster discovery order
    bool operator==(const Blob&) const = default;
};

/// 4-connected components of pixels >= threshold, at least
/// ceil(0.001 * w * h) pixels, largest first, at most 10.
std::vector<Blob> blobs(const GrayImage& luma, std::uint8_t threshold = 128);

std::size_t min_blob_area(std::uint32_t width, std::uint32_t height) noexcept;

// ---- processors ------------------------------------------------------------

/// Normalized BOX for an inclusive pixel box.
Annotation pixel_box_annotation(const PixelBox& b, std::uint32_t width, std::uint32_t height,
                                std::string label, double confidence);

class SceneChangeProcessor : public Processor {
public:
    explicit SceneChangeProcessor(double threshold = 12.0);
    ProcessOutput process(const Frame& frame) override;

private:
    double threshold_;
    std::optional<GrayImage> prev_;
};

class BlobDetectProcessor : public Processor {
public:
    explicit BlobDetectProcessor(std::uint8_t threshold = 128);
    ProcessOutput process(const Frame& frame) override;

private:
    std::uint8_t threshold_;
    std::optional<std::size_t> prev_count_;
};

class GlyphOcrProcessor : public Processor {
public:
    explicit GlyphOcrProcessor(std::uint8_t threshold = 128);
    ProcessOutput process(const Frame& frame) override;

private:
    std::uint8_t threshold_;
    std::string prev_text_;
};

class FindItemProcessor : public Processor {
public:
    /// term is upper-cased; throws BadOptions unless it is a non-empty [A-Z0-9]+ word.
    explicit FindItemProcessor(std::string term);
    ProcessOutput process(const Frame& frame) override;
    const std::string& term() const noexcept { return term_; }

private:
    std::string term_;
};

/// Registers scene_change, blob_detect, glyph_ocr, find_item and remote_vlm,
/// in that order.
void register_builtins(Registry& registry, const VlmConfig& vlm);

}  // namespace relay
