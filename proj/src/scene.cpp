#include "aperture/scene.hpp"

#include "aperture/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

namespace aperture {

namespace {

// 5x7 bitmaps, one byte per row, low five bits used, MSB of those is the left column.
struct FontEntry {
    char symbol;
    std::array<std::uint8_t, 7> rows;
};

constexpr std::array<FontEntry, 18> kFont{{
    {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
    {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
    {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
    {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
    {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
    {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
    {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
    {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
    {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
    {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
    {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
    {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
}};

const FontEntry* find_glyph(char symbol) {
    for (const auto& e : kFont) {
        if (e.symbol == symbol) return &e;
    }
    return nullptr;
}

void draw_glyph(Image& image, const Glyph& glyph) {
    const auto* entry = find_glyph(glyph.symbol);
    if (entry == nullptr) throw Error(ErrorKind::ParamError, std::string("no bitmap for symbol '") + glyph.symbol + "'");
    const auto& box = glyph.box;
    for (int y = std::max(box.y, 0); y < std::min(box.bottom(), image.height()); ++y) {
        const int row = (y - box.y) * 7 / box.height;
        for (int x = std::max(box.x, 0); x < std::min(box.right(), image.width()); ++x) {
            const int col = (x - box.x) * 5 / box.width;
            if (entry->rows[static_cast<std::size_t>(row)] & (0x10 >> col)) image.set(x, y, glyph.color);
        }
    }
}

} // namespace

bool font_has_symbol(char symbol) { return find_glyph(symbol) != nullptr; }

bool shape_contains(const ShapeGeometry& shape, int x, int y) {
    const double px = x + 0.5;
    const double py = y + 0.5;
    if (const auto* d = std::get_if<Disk>(&shape)) {
        const double dx = px - d->cx;
        const double dy = py - d->cy;
        return dx * dx + dy * dy <= d->radius * d->radius;
    }
    const auto& r = std::get<PixelRect>(shape);
    return x >= r.x && x < r.right() && y >= r.y && y < r.bottom();
}

Mask rasterize(const ShapeGeometry& shape, int width, int height) {
    Mask mask(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (shape_contains(shape, x, y)) mask.set(x, y, true);
        }
    }
    return mask;
}

Image render_scene(const SyntheticScene& scene) {
    Image image(scene.width, scene.height, scene.background);
    for (const auto& shape : scene.shapes) {
        if (const auto* r = std::get_if<PixelRect>(&shape.geometry)) {
            image.fill_rect(*r, shape.fill);
            continue;
        }
        const auto& d = std::get<Disk>(shape.geometry);
        const int x0 = std::max(0, static_cast<int>(std::floor(d.cx - d.radius)));
        const int x1 = std::min(scene.width, static_cast<int>(std::ceil(d.cx + d.radius)) + 1);
        const int y0 = std::max(0, static_cast<int>(std::floor(d.cy - d.radius)));
        const int y1 = std::min(scene.height, static_cast<int>(std::ceil(d.cy + d.radius)) + 1);
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                if (shape_contains(shape.geometry, x, y)) image.set(x, y, shape.fill);
            }
        }
    }
    for (const auto& glyph : scene.glyphs) draw_glyph(image, glyph);
    return image;
}

std::optional<std::size_t> shape_at(const SyntheticScene& scene, int x, int y) {
    for (std::size_t i = scene.shapes.size(); i-- > 0;) {
        if (shape_contains(scene.shapes[i].geometry, x, y)) return i;
    }
    return std::nullopt;
}

bool glyph_readable(const SyntheticScene& scene, const Glyph& glyph, const PixelRect& view, const Mask* view_mask) {
    if (view.width <= 0 || view.height <= 0) return false;
    if (!view.contains(glyph.box)) return false;
    const double short_side = std::min(view.width, view.height);
    if (static_cast<double>(glyph.size()) / short_side < scene.resolvability) return false;
    if (view_mask != nullptr) {
        const int cx = glyph.box.x + glyph.box.width / 2 - view.x;
        const int cy = glyph.box.y + glyph.box.height / 2 - view.y;
        if (!view_mask->get(cx, cy)) return false;
    }
    return true;
}

} // namespace aperture
