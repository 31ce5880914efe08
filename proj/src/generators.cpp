#include "aperture/generators.hpp"

#include "aperture/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace aperture {

namespace {

int uniform(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

void param_check(bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorKind::ParamError, what);
}

const std::array<Rgb, 5> kPastels{{{170, 190, 220}, {220, 190, 170}, {190, 220, 170}, {210, 170, 210}, {180, 180, 160}}};

struct PaletteEntry {
    const char* name;
    Rgb color;
};

const std::array<PaletteEntry, 4> kPalette{{{"red", {220, 40, 40}},
                                           {"green", {40, 170, 60}},
                                           {"blue", {50, 80, 220}},
                                           {"yellow", {230, 200, 40}}}};

void add_distractors(std::mt19937_64& rng, SyntheticScene& scene, int count) {
    for (int i = 0; i < count; ++i) {
        const int side = uniform(rng, std::max(4, scene.width / 32), std::max(5, scene.width / 8));
        const int x = uniform(rng, 0, std::max(0, scene.width - side));
        const int y = uniform(rng, 0, std::max(0, scene.height - side));
        const Rgb fill = kPastels[static_cast<std::size_t>(uniform(rng, 0, static_cast<int>(kPastels.size()) - 1))];
        if (uniform(rng, 0, 1) == 0) {
            scene.shapes.push_back({PixelRect{x, y, side, side}, fill, "panel"});
        } else {
            scene.shapes.push_back({Disk{x + side / 2.0, y + side / 2.0, side / 2.0}, fill, "disk"});
        }
    }
}

// Center coordinate for an object of `size` along an axis of `extent`.
int place(std::mt19937_64& rng, int extent, int size, double spread) {
    const double half = std::clamp(spread, 0.0, 1.0) * extent / 2.0;
    const int lo = std::max(size / 2, static_cast<int>(std::ceil(extent / 2.0 - half)));
    const int hi = std::min(extent - (size - size / 2), static_cast<int>(std::floor(extent / 2.0 + half)));
    return uniform(rng, std::min(lo, hi), std::max(lo, hi));
}

std::string shape_kind(const ShapeGeometry& g) { return std::holds_alternative<Disk>(g) ? "disk" : "square"; }

} // namespace

void NeedleParams::validate() const {
    param_check(width >= 8 && height >= 8, "needle: image must be at least 8x8");
    param_check(rho > 0 && rho <= 1, "needle: rho must lie in (0, 1]");
    param_check(glyph_size >= 1 && glyph_size <= std::min(width, height), "needle: glyph must fit inside the image");
    param_check(choices >= 2 && choices <= 8, "needle: choices must lie in [2, 8]");
    param_check(distractors >= 0, "needle: distractors must be non-negative");
}

void MathParams::validate() const {
    param_check(rho > 0 && rho <= 1, "math: rho must lie in (0, 1]");
    param_check(glyph_size >= 1, "math: glyph_size must be positive");
    param_check(width >= 4 * glyph_size && height >= 3 * glyph_size, "math: panel must fit inside the image");
}

void SegParams::validate() const {
    param_check(width >= 8 && height >= 8, "seg: image must be at least 8x8");
    param_check(shapes >= 1, "seg: need at least one shape");
    param_check(colors >= 1 && colors <= static_cast<int>(kPalette.size()), "seg: colors must lie in [1, 4]");
    param_check(min_radius >= 1 && max_radius >= min_radius, "seg: need 1 <= min_radius <= max_radius");
    param_check(2 * min_radius <= std::min(width, height), "seg: shapes must fit inside the image");
    param_check(max_tries >= 1, "seg: max_tries must be positive");
}

nlohmann::json to_json(const NeedleParams& p) {
    return {{"width", p.width},     {"height", p.height},   {"glyph_size", p.glyph_size}, {"rho", p.rho},
            {"choices", p.choices}, {"distractors", p.distractors}, {"spread", p.spread}};
}

nlohmann::json to_json(const MathParams& p) {
    return {{"width", p.width}, {"height", p.height}, {"glyph_size", p.glyph_size}, {"rho", p.rho}};
}

nlohmann::json to_json(const SegParams& p) {
    return {{"width", p.width},   {"height", p.height},         {"shapes", p.shapes},
            {"colors", p.colors}, {"squares", p.squares},       {"min_radius", p.min_radius},
            {"max_radius", p.max_radius}, {"max_tries", p.max_tries}};
}

template <typename T>
static void read_field(const nlohmann::json& doc, const char* key, T& field) {
    if (!doc.contains(key)) return;
    try {
        field = doc.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ParamError, std::string("param ") + key + ": " + e.what());
    }
}

NeedleParams needle_params_from_json(const nlohmann::json& doc) {
    NeedleParams p;
    read_field(doc, "width", p.width);
    read_field(doc, "height", p.height);
    read_field(doc, "glyph_size", p.glyph_size);
    read_field(doc, "rho", p.rho);
    read_field(doc, "choices", p.choices);
    read_field(doc, "distractors", p.distractors);
    read_field(doc, "spread", p.spread);
    return p;
}

MathParams math_params_from_json(const nlohmann::json& doc) {
    MathParams p;
    read_field(doc, "width", p.width);
    read_field(doc, "height", p.height);
    read_field(doc, "glyph_size", p.glyph_size);
    read_field(doc, "rho", p.rho);
    return p;
}

SegParams seg_params_from_json(const nlohmann::json& doc) {
    SegParams p;
    read_field(doc, "width", p.width);
    read_field(doc, "height", p.height);
    read_field(doc, "shapes", p.shapes);
    read_field(doc, "colors", p.colors);
    read_field(doc, "squares", p.squares);
    read_field(doc, "min_radius", p.min_radius);
    read_field(doc, "max_radius", p.max_radius);
    read_field(doc, "max_tries", p.max_tries);
    return p;
}

GeneratedTask gen_needle_task(std::mt19937_64& rng, const NeedleParams& params, const std::string& task_id) {
    params.validate();
    auto scene = std::make_shared<SyntheticScene>();
    scene->width = params.width;
    scene->height = params.height;
    scene->resolvability = params.rho;
    add_distractors(rng, *scene, params.distractors);

    const char symbol = static_cast<char>('A' + uniform(rng, 0, params.choices - 1));
    const int s = params.glyph_size;
    const int cx = place(rng, params.width, s, params.spread);
    const int cy = place(rng, params.height, s, params.spread);
    scene->glyphs.push_back({symbol, PixelRect{cx - s / 2, cy - s / 2, s, s}, Rgb{20, 20, 20}, "target"});

    VqaTask vqa;
    std::string options;
    for (int i = 0; i < params.choices; ++i) {
        vqa.choices.emplace_back(1, static_cast<char>('A' + i));
        options += (i > 0 ? ", " : "") + vqa.choices.back();
    }
    vqa.question = "Which letter is printed on the canvas? Options: " + options + ". Answer with the option letter.";
    vqa.ground_truth = std::string(1, symbol);

    TaskSpec task;
    task.task_id = task_id;
    task.kind = std::move(vqa);
    task.image = std::make_shared<const Image>(render_scene(*scene));
    const bool legible = static_cast<double>(s) / std::min(params.width, params.height) >= params.rho;
    task.meta = {{"generator", "needle"}, {"glyph_size", std::to_string(s)}, {"legible", legible ? "1" : "0"}};
    return {std::move(task), std::move(scene)};
}

GeneratedTask gen_visual_math_task(std::mt19937_64& rng, const MathParams& params, const std::string& task_id) {
    params.validate();
    auto scene = std::make_shared<SyntheticScene>();
    scene->width = params.width;
    scene->height = params.height;
    scene->resolvability = params.rho;
    add_distractors(rng, *scene, 4);

    const int g = params.glyph_size;
    const int pw = 4 * g;
    const int ph = 2 * g;
    const int px = uniform(rng, 0, params.width - pw);
    const int py = uniform(rng, 0, params.height - ph);
    scene->shapes.push_back({PixelRect{px, py, pw, ph}, Rgb{255, 255, 255}, "panel"});
    const int a = uniform(rng, 0, 9);
    const int b = uniform(rng, 0, 9);
    const int gy = py + g / 2;
    scene->glyphs.push_back({static_cast<char>('0' + a), PixelRect{px + g / 2, gy, g, g}, Rgb{20, 20, 20}, "operand"});
    scene->glyphs.push_back(
        {static_cast<char>('0' + b), PixelRect{px + pw - g - g / 2, gy, g, g}, Rgb{20, 20, 20}, "operand"});

    TaskSpec task;
    task.task_id = task_id;
    task.kind = MathTask{"What is the sum of the two digits printed inside the white panel?", std::to_string(a + b)};
    task.image = std::make_shared<const Image>(render_scene(*scene));
    const bool legible = static_cast<double>(g) / std::min(params.width, params.height) >= params.rho;
    task.meta = {{"generator", "visual-math"}, {"legible", legible ? "1" : "0"}};
    return {std::move(task), std::move(scene)};
}

GeneratedTask gen_shape_seg_task(std::mt19937_64& rng, const SegParams& params, const std::string& task_id) {
    params.validate();
    for (int attempt = 0; attempt < params.max_tries; ++attempt) {
        auto scene = std::make_shared<SyntheticScene>();
        scene->width = params.width;
        scene->height = params.height;
        std::vector<std::size_t> colors;
        for (int i = 0; i < params.shapes; ++i) {
            const int r = uniform(rng, params.min_radius, params.max_radius);
            const int cx = uniform(rng, r, params.width - r);
            const int cy = uniform(rng, r, params.height - r);
            const auto color = static_cast<std::size_t>(uniform(rng, 0, params.colors - 1));
            const bool square = params.squares && uniform(rng, 0, 1) == 1;
            ShapeGeometry geometry = square ? ShapeGeometry{PixelRect{cx - r, cy - r, 2 * r, 2 * r}}
                                            : ShapeGeometry{Disk{cx + 0.5, cy + 0.5, static_cast<double>(r)}};
            const auto& entry = kPalette[color];
            scene->shapes.push_back({geometry, entry.color, std::string(entry.name) + " " + shape_kind(geometry)});
            colors.push_back(color);
        }
        const std::size_t target = scene->shapes.size() - 1;
        const auto& target_shape = scene->shapes[target];
        Mask gt = rasterize(target_shape.geometry, params.width, params.height);
        if (gt.none()) continue;

        std::vector<long long> peer_areas;
        for (std::size_t i = 0; i + 1 < scene->shapes.size(); ++i) {
            if (scene->shapes[i].label == target_shape.label) {
                peer_areas.push_back(rasterize(scene->shapes[i].geometry, params.width, params.height).count());
            }
        }
        std::string referent;
        const long long area = gt.count();
        const bool larger = std::all_of(peer_areas.begin(), peer_areas.end(), [&](long long a) { return area > a; });
        const bool smaller = std::all_of(peer_areas.begin(), peer_areas.end(), [&](long long a) { return area < a; });
        if (peer_areas.empty()) {
            referent = "the " + target_shape.label;
        } else if (larger) {
            referent = (peer_areas.size() == 1 ? "the larger " : "the largest ") + target_shape.label;
        } else if (smaller) {
            referent = (peer_areas.size() == 1 ? "the smaller " : "the smallest ") + target_shape.label;
        } else {
            continue;
        }

        TaskSpec task;
        task.task_id = task_id;
        task.kind = SegmentationTask{"Segment " + referent + ".", std::move(gt)};
        task.image = std::make_shared<const Image>(render_scene(*scene));
        task.meta = {{"generator", "shapes"}, {"target_shape", std::to_string(target)}, {"referent", referent}};
        return {std::move(task), std::move(scene)};
    }
    throw Error(ErrorKind::ParamError,
                "no scene with a unique referent after " + std::to_string(params.max_tries) + " tries");
}

std::optional<NormalizedBBox> find_readable_zoom(const SyntheticScene& scene, const Glyph& glyph, int min_view_side) {
    const int s = glyph.size();
    int side = static_cast<int>(std::floor(s / scene.resolvability));
    side = std::max({side, s, min_view_side});
    const int w = std::min(side, scene.width);
    const int h = std::min(side, scene.height);
    const int cx = glyph.box.x + glyph.box.width / 2;
    const int cy = glyph.box.y + glyph.box.height / 2;
    const PixelRect rect{std::clamp(cx - w / 2, 0, scene.width - w), std::clamp(cy - h / 2, 0, scene.height - h), w, h};
    const auto bbox = to_normalized_bbox(rect, scene.width, scene.height);
    const auto mapped = to_pixel_rect(bbox, scene.width, scene.height, min_view_side);
    if (!glyph_readable(scene, glyph, mapped)) return std::nullopt;
    return bbox;
}

std::vector<const Glyph*> answer_glyphs(const SyntheticScene& scene) {
    std::vector<const Glyph*> out;
    for (const auto& g : scene.glyphs) {
        if (g.role == "target" || g.role == "operand") out.push_back(&g);
    }
    return out;
}

// ---------------------------------------------------------------------------

std::shared_ptr<const TaskInstance> instantiate(const ManifestEntry& entry) {
    std::mt19937_64 rng(entry.seed);
    GeneratedTask generated;
    switch (entry.family) {
    case TaskFamily::FineGrainedVQA:
        generated = gen_needle_task(rng, needle_params_from_json(entry.params), entry.task_id);
        break;
    case TaskFamily::VisualMath:
        generated = gen_visual_math_task(rng, math_params_from_json(entry.params), entry.task_id);
        break;
    case TaskFamily::Segmentation:
        generated = gen_shape_seg_task(rng, seg_params_from_json(entry.params), entry.task_id);
        break;
    }
    return std::make_shared<const TaskInstance>(TaskInstance{entry, std::move(generated.task), std::move(generated.scene)});
}

nlohmann::json to_json(const ManifestEntry& entry) {
    return {{"task_id", entry.task_id},
            {"family", std::string(to_string(entry.family))},
            {"seed", entry.seed},
            {"params", entry.params}};
}

ManifestEntry manifest_entry_from_json(const nlohmann::json& doc) {
    ManifestEntry e;
    try {
        e.task_id = doc.at("task_id").get<std::string>();
        e.family = parse_task_family(doc.at("family").get<std::string>());
        e.seed = doc.at("seed").get<std::uint64_t>();
        e.params = doc.value("params", nlohmann::json::object());
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorKind::ParamError, std::string("manifest entry: ") + ex.what());
    }
    return e;
}

void write_manifest(std::ostream& out, const std::vector<ManifestEntry>& entries) {
    for (const auto& e : entries) out << to_json(e).dump() << "\n";
}

std::vector<ManifestEntry> read_manifest(std::istream& in) {
    std::vector<ManifestEntry> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            entries.push_back(manifest_entry_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw Error(ErrorKind::ParamError, "manifest line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return entries;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    return read_manifest(in);
}

std::vector<ManifestEntry> make_manifest(TaskFamily family, int count, std::uint64_t seed, const nlohmann::json& params,
                                         const std::string& prefix) {
    std::mt19937_64 rng(seed);
    std::vector<ManifestEntry> out;
    for (int i = 0; i < count; ++i) {
        std::ostringstream id;
        id << prefix << '-' << i;
        out.push_back({id.str(), family, rng(), params});
    }
    return out;
}

std::vector<ManifestEntry> needle_pool(int count, int control, std::uint64_t seed) {
    NeedleParams tiny;
    NeedleParams large;
    large.glyph_size = 100;
    auto out = make_manifest(TaskFamily::FineGrainedVQA, count - control, seed, to_json(tiny), "needle");
    auto extra = make_manifest(TaskFamily::FineGrainedVQA, control, seed ^ 0xC0117801ULL, to_json(large), "control");
    out.insert(out.end(), extra.begin(), extra.end());
    return out;
}

std::vector<std::shared_ptr<const TaskInstance>> instantiate_all(const std::vector<ManifestEntry>& entries) {
    std::vector<std::shared_ptr<const TaskInstance>> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(instantiate(e));
    return out;
}

} // namespace aperture
