#include "aperture/views.hpp"

#include "aperture/backends.hpp"
#include "aperture/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace aperture {

const NormalizedBBox& bbox_of(const ApertureAction& action) {
    return std::visit([](const auto& a) -> const NormalizedBBox& { return a.bbox; }, action);
}

bool is_zoom(const ApertureAction& action) { return std::holds_alternative<ZoomAction>(action); }

const PixelRect& View::rect() const {
    return std::visit([](const auto& p) -> const PixelRect& { return p.rect; }, provenance);
}

namespace {

// Grows [lo, hi) to at least `min_side` (capped by `limit`) around its center.
void expand_span(int& lo, int& hi, int min_side, int limit) {
    const int target = std::min(min_side, limit);
    const int side = hi - lo;
    if (side >= target) return;
    const int need = target - side;
    lo -= need / 2;
    hi += need - need / 2;
    if (lo < 0) {
        hi -= lo;
        lo = 0;
    }
    if (hi > limit) {
        lo -= hi - limit;
        hi = limit;
    }
    lo = std::max(lo, 0);
}

} // namespace

PixelRect to_pixel_rect(const NormalizedBBox& bbox, int width, int height, int min_view_side) {
    if (width < 1 || height < 1) throw Error(ErrorKind::InternalError, "image must be at least 1x1");
    for (double v : {bbox.x1, bbox.y1, bbox.x2, bbox.y2}) {
        if (!std::isfinite(v)) throw Error(ErrorKind::DegenerateBox, "non-finite box coordinate");
    }
    const double x1 = std::clamp(bbox.x1, 0.0, 1000.0);
    const double y1 = std::clamp(bbox.y1, 0.0, 1000.0);
    const double x2 = std::clamp(bbox.x2, 0.0, 1000.0);
    const double y2 = std::clamp(bbox.y2, 0.0, 1000.0);
    if (!(x1 < x2) || !(y1 < y2)) throw Error(ErrorKind::DegenerateBox, "box has zero area after clamping");

    int px1 = static_cast<int>(std::floor(x1 * width / 1000.0));
    int py1 = static_cast<int>(std::floor(y1 * height / 1000.0));
    int px2 = static_cast<int>(std::ceil(x2 * width / 1000.0));
    int py2 = static_cast<int>(std::ceil(y2 * height / 1000.0));
    px1 = std::clamp(px1, 0, width);
    py1 = std::clamp(py1, 0, height);
    px2 = std::clamp(px2, 0, width);
    py2 = std::clamp(py2, 0, height);
    if (px2 <= px1 || py2 <= py1) throw Error(ErrorKind::DegenerateBox, "box maps to an empty pixel rect");

    expand_span(px1, px2, min_view_side, width);
    expand_span(py1, py2, min_view_side, height);
    return {px1, py1, px2 - px1, py2 - py1};
}

NormalizedBBox to_normalized_bbox(const PixelRect& rect, int width, int height) {
    // Nudge inward so floor/ceil in to_pixel_rect land back on the same pixel edges.
    constexpr double kNudge = 1e-6;
    return {
        std::max(0.0, (rect.x + kNudge) * 1000.0 / width),
        std::max(0.0, (rect.y + kNudge) * 1000.0 / height),
        std::min(1000.0, (rect.right() - kNudge) * 1000.0 / width),
        std::min(1000.0, (rect.bottom() - kNudge) * 1000.0 / height),
    };
}

View zoom_crop(const Image& image, const NormalizedBBox& bbox, const ApertureConfig& config) {
    const PixelRect rect = to_pixel_rect(bbox, image.width(), image.height(), config.min_view_side);
    return View{std::make_shared<const Image>(image.crop(rect)), ZoomCrop{rect}, nullptr};
}

Image noise_field(const NoiseSpec& noise, int width, int height) {
    Image out(width, height);
    std::mt19937_64 rng(noise.seed);
    std::normal_distribution<double> gauss(noise.mean, noise.stddev);
    for (auto& v : out.bytes()) {
        v = static_cast<std::uint8_t>(std::clamp(std::lround(gauss(rng)), 0L, 255L));
    }
    return out;
}

View compose_segment_view(const Image& image, const Mask& mask, const NormalizedBBox& bbox, const NoiseSpec& noise,
                          const ApertureConfig& config) {
    if (mask.width() != image.width() || mask.height() != image.height()) {
        throw Error(ErrorKind::DimensionMismatch, "mask and image dimensions differ");
    }
    const PixelRect rect = to_pixel_rect(bbox, image.width(), image.height(), config.min_view_side);
    Image out = noise_field(noise, rect.width, rect.height);
    auto local = std::make_shared<Mask>(rect.width, rect.height);
    for (int y = 0; y < rect.height; ++y) {
        for (int x = 0; x < rect.width; ++x) {
            if (mask.get(rect.x + x, rect.y + y)) {
                out.set(x, y, image.at(rect.x + x, rect.y + y));
                local->set(x, y, true);
            }
        }
    }
    SegmentComposite provenance{mask.fingerprint(), noise.seed, rect, mask.none()};
    return View{std::make_shared<const Image>(std::move(out)), provenance, std::move(local)};
}

Mask request_mask(SegmenterBackend& segmenter, const SegmentRequest& request) {
    Mask mask = segmenter.segment(request);
    if (mask.width() != request.image->width() || mask.height() != request.image->height()) {
        throw Error(ErrorKind::DimensionMismatch, "segmenter returned a mask of the wrong size");
    }
    if (mask.none()) throw Error(ErrorKind::EmptyMask, "segmenter selected no pixels");
    return mask;
}

} // namespace aperture
