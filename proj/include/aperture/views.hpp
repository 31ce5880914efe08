#pragma once

// Aperture actions and the views they produce: rectangular zoom crops and
// mask-composited segmentation views over seeded Gaussian background noise.

#include "aperture/image.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace aperture {

/// Box in the [0,1000]^2 frame shared by every image regardless of resolution.
struct NormalizedBBox {
    double x1 = 0;
    double y1 = 0;
    double x2 = 0;
    double y2 = 0;

    friend bool operator==(const NormalizedBBox&, const NormalizedBBox&) = default;
};

struct PointPrompt {
    double x = 0;
    double y = 0;
    int label = 1;  // 1 = foreground, 0 = background

    friend bool operator==(const PointPrompt&, const PointPrompt&) = default;
};

struct ZoomAction {
    NormalizedBBox bbox;
    std::optional<std::string> obj_label;

    friend bool operator==(const ZoomAction&, const ZoomAction&) = default;
};

struct SegmentAction {
    NormalizedBBox bbox;
    std::vector<PointPrompt> points;
    std::optional<std::string> obj_label;

    friend bool operator==(const SegmentAction&, const SegmentAction&) = default;
};

using ApertureAction = std::variant<ZoomAction, SegmentAction>;

const NormalizedBBox& bbox_of(const ApertureAction& action);
bool is_zoom(const ApertureAction& action);

struct ZoomCrop {
    PixelRect rect;
};

struct SegmentComposite {
    std::uint64_t mask_id = 0;
    std::uint64_t noise_seed = 0;
    PixelRect rect;
    bool empty_mask = false;
};

struct View {
    std::shared_ptr<const Image> pixels;
    std::variant<ZoomCrop, SegmentComposite> provenance;
    /// Foreground mask restricted to `rect()`; null for zoom crops.
    std::shared_ptr<const Mask> mask;

    const PixelRect& rect() const;
    long long area() const { return pixels ? static_cast<long long>(pixels->width()) * pixels->height() : 0; }
};

struct NoiseSpec {
    double mean = 127.5;
    double stddev = 63.75;
    std::uint64_t seed = 0;
};

struct ApertureConfig {
    int min_view_side = 8;
    double noise_mean = 127.5;
    double noise_stddev = 63.75;
};

/// Maps a normalized box onto pixels: floor for minima, ceil for maxima,
/// clamped to the image. Sides shorter than `min_view_side` grow symmetrically
/// and are shifted back inside the image. Throws DegenerateBox when the
/// clamped box has no area.
PixelRect to_pixel_rect(const NormalizedBBox& bbox, int width, int height, int min_view_side = 8);

/// Inverse of to_pixel_rect for rects that need no expansion.
NormalizedBBox to_normalized_bbox(const PixelRect& rect, int width, int height);

View zoom_crop(const Image& image, const NormalizedBBox& bbox, const ApertureConfig& config = {});

/// Per-channel Gaussian field, rounded and clamped to [0,255], row-major draw order.
Image noise_field(const NoiseSpec& noise, int width, int height);

/// out = mask * image + (1 - mask) * noise over the bbox crop. The noise
/// field is drawn over the crop window only, so its first sample lands on the
/// crop's top-left pixel.
View compose_segment_view(const Image& image, const Mask& mask, const NormalizedBBox& bbox, const NoiseSpec& noise,
                          const ApertureConfig& config = {});

struct SegmentRequest;
class SegmenterBackend;

/// Asks the backend for a mask; throws EmptyMask for an all-zero result and
/// DimensionMismatch when the backend returns the wrong raster size.
Mask request_mask(SegmenterBackend& segmenter, const SegmentRequest& request);

} // namespace aperture
