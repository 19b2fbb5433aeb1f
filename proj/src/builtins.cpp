#include "relay/builtins.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#ifndef RELAY_DATA_DIR
#define RELAY_DATA_DIR "data"
#endif

namespace relay {

GrayImage GrayImage::from_frame(const Frame& f) {
    GrayImage g;
    g.width = f.width();
    g.height = f.height();
    g.pixels = luma_plane(f);
    return g;
}

Frame GrayImage::to_frame(std::uint32_t seq, std::uint64_t ts_us) const {
    return Frame(seq, ts_us, width, height, PixelFormat::Gray8, pixels);
}

double mad(ByteView a, ByteView b) {
    if (a.size() != b.size()) throw ContractViolation("mad: buffers differ in size");
    if (a.empty()) return 0.0;
    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] > b[i] ? a[i] - b[i] : b[i] - a[i];
    return static_cast<double>(sum) / static_cast<double>(a.size());
}

// ---- font ------------------------------------------------------------------

GlyphFont GlyphFont::parse(std::string_view text) {
    std::vector<std::string> lines;
    std::istringstream in{std::string(text)};
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    GlyphFont font;
    for (std::size_t i = 0; i < lines.size();) {
        const auto& head = lines[i];
        if (head.size() != 1) throw std::runtime_error("glyph font: expected a character, got '" + head + "'");
        const char c = head[0];
        if (!((c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9')))
            throw std::runtime_error(std::string("glyph font: unsupported character '") + c + "'");
        if (font.find(c)) throw std::runtime_error(std::string("glyph font: duplicate '") + c + "'");
        if (i + kGlyphHeight >= lines.size())
            throw std::runtime_error(std::string("glyph font: truncated record for '") + c + "'");
        GlyphMask mask{};
        for (int r = 0; r < kGlyphHeight; ++r) {
            const auto& row = lines[i + 1 + r];
            if (row.size() != kGlyphWidth) throw std::runtime_error(std::string("glyph font: bad row for '") + c + "'");
            for (int col = 0; col < kGlyphWidth; ++col) {
                if (row[col] != '#' && row[col] != '.')
                    throw std::runtime_error(std::string("glyph font: bad cell for '") + c + "'");
                mask[r][col] = row[col] == '#';
            }
        }
        font.glyphs_.emplace_back(c, mask);
        i += 1 + kGlyphHeight;
    }
    for (std::size_t a = 0; a < font.glyphs_.size(); ++a)
        for (std::size_t b = a + 1; b < font.glyphs_.size(); ++b)
            if (font.glyphs_[a].second == font.glyphs_[b].second)
                throw std::runtime_error("glyph font: identical masks for '" + std::string(1, font.glyphs_[a].first) +
                                         "' and '" + std::string(1, font.glyphs_[b].first) + "'");
    return font;
}

GlyphFont GlyphFont::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open glyph font " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

const GlyphFont& GlyphFont::standard() {
    static const GlyphFont font = [] {
        if (const char* env = std::getenv("RELAY_GLYPH_FONT"); env && *env) return load(env);
        return load(std::filesystem::path(RELAY_DATA_DIR) / "glyphs5x7.txt");
    }();
    return font;
}

const GlyphMask* GlyphFont::find(char c) const noexcept {
    for (const auto& [ch, mask] : glyphs_)
        if (ch == c) return &mask;
    return nullptr;
}

int text_width(std::string_view text) noexcept {
    return text.empty() ? 0 : static_cast<int>(text.size()) * kGlyphAdvance - 1;
}

void render_text(std::string_view text, int x, int y, GrayImage& canvas, const GlyphFont& font) {
    if (text.empty()) return;
    for (char c : text)
        if (c != ' ' && !font.find(c)) throw RenderError(std::string("unsupported character '") + c + "'");
    if (x < 0 || y < 0 || x + text_width(text) > static_cast<int>(canvas.width) ||
        y + kGlyphHeight > static_cast<int>(canvas.height))
        throw RenderError("text does not fit in the canvas");
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == ' ') continue;
        const auto& mask = *font.find(text[i]);
        const int gx = x + static_cast<int>(i) * kGlyphAdvance;
        for (int r = 0; r < kGlyphHeight; ++r)
            for (int c = 0; c < kGlyphWidth; ++c)
                if (mask[r][c]) canvas.at(gx + c, y + r) = 255;
    }
}

namespace {

std::uint64_t mask_key(const GlyphMask& m) {
    std::uint64_t key = 0;
    for (int r = 0; r < kGlyphHeight; ++r)
        for (int c = 0; c < kGlyphWidth; ++c) key = key << 1 | (m[r][c] ? 1u : 0u);
    return key;
}

}  // namespace

std::vector<OcrToken> recognize(const GrayImage& luma, const GlyphFont& font, std::uint8_t threshold) {
    const int w = static_cast<int>(luma.width);
    const int h = static_cast<int>(luma.height);
    if (w < kGlyphWidth || h < kGlyphHeight) return {};

    std::unordered_map<std::uint64_t, char> by_key;
    for (const auto& [c, mask] : font.glyphs()) by_key.emplace(mask_key(mask), c);

    // 5-bit code of the window starting at each (x, y), one row at a time
    const int cols = w - kGlyphWidth + 1;
    std::vector<std::uint8_t> row_code(static_cast<std::size_t>(cols) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < cols; ++x) {
            std::uint8_t code = 0;
            for (int c = 0; c < kGlyphWidth; ++c) code = code << 1 | (luma.at(x + c, y) >= threshold ? 1 : 0);
            row_code[static_cast<std::size_t>(y) * cols + x] = code;
        }

    std::vector<OcrToken> tokens;
    for (int y = 0; y + kGlyphHeight <= h; ++y) {
        std::map<int, std::size_t> open;  // next expected x -> token index
        for (int x = 0; x < cols; ++x) {
            std::uint64_t key = 0;
            for (int r = 0; r < kGlyphHeight; ++r)
                key = key << kGlyphWidth | row_code[static_cast<std::size_t>(y + r) * cols + x];
            auto it = by_key.find(key);
            if (it == by_key.end()) continue;
            if (auto o = open.find(x); o != open.end()) {
                auto& tok = tokens[o->second];
                tok.text += it->second;
                tok.bbox.x1 = x + kGlyphWidth - 1;
                open.emplace(x + kGlyphAdvance, o->second);
                open.erase(o);
            } else {
                tokens.push_back({std::string(1, it->second), {x, y, x + kGlyphWidth - 1, y + kGlyphHeight - 1}});
                open.emplace(x + kGlyphAdvance, tokens.size() - 1);
            }
        }
    }
    return tokens;
}

// ---- blobs -----------------------------------------------------------------

std::size_t min_blob_area(std::uint32_t width, std::uint32_t height) noexcept {
    const std::size_t n = std::size_t{width} * height;
    return (n + 999) / 1000;
}

std::vector<Blob> blobs(const GrayImage& luma, std::uint8_t threshold) {
    const std::uint32_t w = luma.width, h = luma.height;
    std::vector<std::uint32_t> label(std::size_t{w} * h, 0);
    struct Found {
        Blob blob;
        std::uint32_t first_y, first_x;
    };
    std::vector<Found> found;
    std::vector<std::size_t> stack;
    std::uint32_t next = 0;
    for (std::uint32_t y = 0; y < h; ++y)
        for (std::uint32_t x = 0; x < w; ++x) {
            const std::size_t start = std::size_t{y} * w + x;
            if (label[start] || luma.pixels[start] < threshold) continue;
            ++next;
            Blob b{{int(x), int(y), int(x), int(y)}, 0, next - 1};
            label[start] = next;
            stack.push_back(start);
            while (!stack.empty()) {
                const auto p = stack.back();
                stack.pop_back();
                const auto px = static_cast<std::uint32_t>(p % w), py = static_cast<std::uint32_t>(p / w);
                ++b.area;
                b.bbox.x0 = std::min(b.bbox.x0, int(px));
                b.bbox.x1 = std::max(b.bbox.x1, int(px));
                b.bbox.y0 = std::min(b.bbox.y0, int(py));
                b.bbox.y1 = std::max(b.bbox.y1, int(py));
                auto visit = [&](std::size_t q) {
                    if (!label[q] && luma.pixels[q] >= threshold) {
                        label[q] = next;
                        stack.push_back(q);
                    }
                };
                if (px > 0) visit(p - 1);
                if (px + 1 < w) visit(p + 1);
                if (py > 0) visit(p - w);
                if (py + 1 < h) visit(p + w);
            }
            found.push_back({b, y, x});
        }

    const auto min_area = min_blob_area(w, h);
    std::erase_if(found, [&](const Found& f) { return f.blob.area < min_area; });
    std::sort(found.begin(), found.end(), [](const Found& a, const Found& b) {
        if (a.blob.area != b.blob.area) return a.blob.area > b.blob.area;
        if (a.first_y != b.first_y) return a.first_y < b.first_y;
        return a.first_x < b.first_x;
    });
    if (found.size() > 10) found.resize(10);
    std::vector<Blob> out;
    out.reserve(found.size());
    for (auto& f : found) out.push_back(f.blob);
    return out;
}

// ---- processors ------------------------------------------------------------

Annotation pixel_box_annotation(const PixelBox& b, std::uint32_t width, std::uint32_t height,
                                std::string label, double confidence) {
    const double w = width, h = height;
    return Annotation::box(std::move(label), confidence, b.x0 / w, b.y0 / h, (b.x1 + 1) / w, (b.y1 + 1) / h);
}

SceneChangeProcessor::SceneChangeProcessor(double threshold) : threshold_(threshold) {
    if (!(threshold >= 0.0)) throw BadOptions("threshold must be non-negative");
}

ProcessOutput SceneChangeProcessor::process(const Frame& frame) {
    auto current = GrayImage::from_frame(frame);
    ProcessOutput out;
    if (prev_ && prev_->width == current.width && prev_->height == current.height) {
        const double diff = mad(prev_->pixels, current.pixels);
        if (diff >= threshold_) {
            out.speech = Speech{"scene changed", Priority::Routine};
            out.annotations.push_back(Annotation::text_label("scene changed", std::min(1.0, diff / 255.0), 0.5, 0.5));
        }
    }
    prev_ = std::move(current);
    return out;
}

BlobDetectProcessor::BlobDetectProcessor(std::uint8_t threshold) : threshold_(threshold) {}

ProcessOutput BlobDetectProcessor::process(const Frame& frame) {
    const auto luma = GrayImage::from_frame(frame);
    const auto found = blobs(luma, threshold_);
    ProcessOutput out;
    for (const auto& b : found) {
        const double box_area = double(b.bbox.x1 - b.bbox.x0 + 1) * double(b.bbox.y1 - b.bbox.y0 + 1);
        out.annotations.push_back(pixel_box_annotation(b.bbox, luma.width, luma.height, "object", b.area / box_area));
    }
    if (!prev_count_ || *prev_count_ != found.size())
        out.speech = Speech{std::to_string(found.size()) + " objects visible", Priority::Routine};
    prev_count_ = found.size();
    return out;
}

GlyphOcrProcessor::GlyphOcrProcessor(std::uint8_t threshold) : threshold_(threshold) {}

ProcessOutput GlyphOcrProcessor::process(const Frame& frame) {
    const auto luma = GrayImage::from_frame(frame);
    const auto tokens = recognize(luma, GlyphFont::standard(), threshold_);
    ProcessOutput out;
    std::string joined;
    for (const auto& t : tokens) {
        if (out.annotations.size() == kMaxAnnotations) break;
        out.annotations.push_back(pixel_box_annotation(t.bbox, luma.width, luma.height, t.text, 1.0));
        if (!joined.empty()) joined += ' ';
        joined += t.text;
    }
    if (!joined.empty() && joined != prev_text_)
        out.speech = Speech{truncate_utf8(joined, kMaxDescriptionBytes), Priority::Routine};
    prev_text_ = std::move(joined);
    return out;
}

FindItemProcessor::FindItemProcessor(std::string term) : term_(std::move(term)) {
    for (auto& c : term_)
        if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
    if (term_.empty()) throw BadOptions("find_item needs a non-empty term");
    for (char c : term_)
        if (!((c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9')))
            throw BadOptions("find_item term must be a single word of A-Z and 0-9");
}

ProcessOutput FindItemProcessor::process(const Frame& frame) {
    const auto luma = GrayImage::from_frame(frame);
    for (const auto& t : recognize(luma)) {
        if (t.text != term_) continue;
        ProcessOutput out;
        out.annotations.push_back(pixel_box_annotation(t.bbox, luma.width, luma.height, term_, 1.0));
        const auto [cx, cy] = annotation_center(out.annotations.back());
        const auto dir = egocentric_direction(cx, cy);
        out.speech = Speech{term_ + " at " + std::string(to_string(dir.hband)) + ", " + std::string(to_string(dir.vband)),
                            Priority::Interrupt};
        return out;
    }
    return {};
}

namespace {

std::uint8_t threshold_option(const ProcessorOptions& opts) {
    const int t = opts.get_int("threshold", 128);
    if (t < 0 || t > 255) throw BadOptions("threshold must be in 0..255");
    return static_cast<std::uint8_t>(t);
}

}  // namespace

void register_builtins(Registry& registry, const VlmConfig& vlm) {
    registry.add({"scene_change", "Scene change", false}, [](const ProcessorOptions& o) {
        return std::make_unique<SceneChangeProcessor>(o.get_real("threshold", 12.0));
    });
    registry.add({"blob_detect", "Object detection", false},
                 [](const ProcessorOptions& o) { return std::make_unique<BlobDetectProcessor>(threshold_option(o)); });
    registry.add({"glyph_ocr", "Text reading (OCR)", false},
                 [](const ProcessorOptions& o) { return std::make_unique<GlyphOcrProcessor>(threshold_option(o)); });
    registry.add({"find_item", "Find item", false},
                 [](const ProcessorOptions& o) { return std::make_unique<FindItemProcessor>(o.get("term").value_or("")); });
    registry.add({"remote_vlm", "Live description (remote)", true}, [vlm](const ProcessorOptions& o) {
        auto cfg = vlm;
        if (auto p = o.get("prompt")) {
            if (p->empty()) throw BadOptions("prompt must not be empty");
            cfg.prompt = *p;
        }
        if (auto m = o.get("model")) {
            if (m->empty()) throw BadOptions("model must not be empty");
            cfg.model = *m;
        }
        return std::make_unique<RemoteVlmProcessor>(std::move(cfg));
    });
}

}  // namespace relay
