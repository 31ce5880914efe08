#pragma once

// Synthetic scenes with exact geometry: the renderer, the rasterizer used for
// ground-truth masks, and the simulated-perception readability rule.

#include "aperture/image.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace aperture {

struct Disk {
    double cx = 0;
    double cy = 0;
    double radius = 0;
};

using ShapeGeometry = std::variant<Disk, PixelRect>;

struct SceneShape {
    ShapeGeometry geometry;
    Rgb fill;
    std::string label;  // e.g. "red disk"
};

/// Bitmap character drawn into a square box; `size` is the box side.
struct Glyph {
    char symbol = 'A';
    PixelRect box;
    Rgb color;
    std::string role;  // "target", "distractor", "operand", ...

    int size() const { return box.width; }
};

struct SyntheticScene {
    int width = 0;
    int height = 0;
    Rgb background{200, 200, 200};
    std::vector<SceneShape> shapes;  // later entries draw on top
    std::vector<Glyph> glyphs;       // drawn after all shapes
    double resolvability = 0.05;     // minimum glyph side / view short side

    PixelRect bounds() const { return {0, 0, width, height}; }
};

bool shape_contains(const ShapeGeometry& shape, int x, int y);
Mask rasterize(const ShapeGeometry& shape, int width, int height);
Image render_scene(const SyntheticScene& scene);

/// Index of the topmost shape covering the pixel, if any.
std::optional<std::size_t> shape_at(const SyntheticScene& scene, int x, int y);

/// A glyph is legible when its box lies inside the view, it spans at least
/// `resolvability` of the view's shorter side, and (for segmentation views)
/// its center survives the mask. `view_mask` is in view-local coordinates.
bool glyph_readable(const SyntheticScene& scene, const Glyph& glyph, const PixelRect& view,
                    const Mask* view_mask = nullptr);

bool font_has_symbol(char symbol);

} // namespace aperture
