#pragma once

// Synthetic task generators and the JSONL tasks manifest that regenerates them.

#include "aperture/scene.hpp"
#include "aperture/task.hpp"
#include "aperture/views.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace aperture {

struct NeedleParams {
    int width = 512;
    int height = 512;
    int glyph_size = 12;
    double rho = 0.05;
    int choices = 4;      // options A.. (at most 8)
    int distractors = 6;  // background shapes
    /// Glyph centers fall in the central `spread` fraction of each axis.
    double spread = 0.5;

    void validate() const;
};

struct MathParams {
    int width = 384;
    int height = 384;
    int glyph_size = 10;
    double rho = 0.05;

    void validate() const;
};

struct SegParams {
    int width = 128;
    int height = 128;
    int shapes = 3;
    int colors = 4;  // palette entries in use (1..4)
    bool squares = true;
    int min_radius = 8;
    int max_radius = 28;
    int max_tries = 100;

    void validate() const;
};

nlohmann::json to_json(const NeedleParams& p);
nlohmann::json to_json(const MathParams& p);
nlohmann::json to_json(const SegParams& p);
NeedleParams needle_params_from_json(const nlohmann::json& doc);
MathParams math_params_from_json(const nlohmann::json& doc);
SegParams seg_params_from_json(const nlohmann::json& doc);

struct GeneratedTask {
    TaskSpec task;
    std::shared_ptr<const SyntheticScene> scene;
};

/// Multiple-choice letter question about a single glyph. meta["legible"] is
/// "1" when the glyph is readable in the full view.
GeneratedTask gen_needle_task(std::mt19937_64& rng, const NeedleParams& params, const std::string& task_id);

/// Sum of two small digits inside a white panel.
GeneratedTask gen_visual_math_task(std::mt19937_64& rng, const MathParams& params, const std::string& task_id);

/// Overlapping shapes; the instruction names the topmost shape by color, kind
/// and (when needed) relative size. meta["target_shape"] is its index.
GeneratedTask gen_shape_seg_task(std::mt19937_64& rng, const SegParams& params, const std::string& task_id);

/// A zoom box under which `glyph` becomes readable, if one exists.
std::optional<NormalizedBBox> find_readable_zoom(const SyntheticScene& scene, const Glyph& glyph, int min_view_side = 8);

/// Glyphs the answer depends on ("target" or "operand" roles).
std::vector<const Glyph*> answer_glyphs(const SyntheticScene& scene);

struct ManifestEntry {
    std::string task_id;
    TaskFamily family = TaskFamily::FineGrainedVQA;
    std::uint64_t seed = 0;
    nlohmann::json params = nlohmann::json::object();

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct TaskInstance {
    ManifestEntry entry;
    TaskSpec task;
    std::shared_ptr<const SyntheticScene> scene;
};

/// Deterministically rebuilds a task from its manifest entry.
std::shared_ptr<const TaskInstance> instantiate(const ManifestEntry& entry);

nlohmann::json to_json(const ManifestEntry& entry);
ManifestEntry manifest_entry_from_json(const nlohmann::json& doc);
void write_manifest(std::ostream& out, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(std::istream& in);
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

/// `count` entries of one family with per-task seeds drawn from `seed`.
std::vector<ManifestEntry> make_manifest(TaskFamily family, int count, std::uint64_t seed, const nlohmann::json& params,
                                         const std::string& prefix);

/// The needle pool used by the reward-weight experiment: `count` tasks, the
/// last `control` of which carry a glyph large enough to read without zooming.
std::vector<ManifestEntry> needle_pool(int count, int control, std::uint64_t seed);

std::vector<std::shared_ptr<const TaskInstance>> instantiate_all(const std::vector<ManifestEntry>& entries);

} // namespace aperture
