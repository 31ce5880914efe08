#pragma once

// Template-driven policies over synthetic scenes and the rollout environment
// the toy trainer runs against.

#include "aperture/agrpo.hpp"
#include "aperture/backends.hpp"
#include "aperture/generators.hpp"

#include <map>
#include <memory>
#include <mutex>

namespace aperture {

struct TemplateOptions {
    int zoom_side = 200;  // pixels
    int jitter = 94;      // maximum offset of the zoom center, pixels per axis
};

/// Emits the next assistant turn of template `t` for a synthetic task.
/// Perception is simulated: a glyph is read only when it is legible in the
/// most recent view; otherwise the answer is a seeded guess.
ChatResponse template_turn(const TaskInstance& instance, Template t, std::uint64_t seed, const TemplateOptions& options,
                           std::span<const Message> history);

/// Zoom box the template policy would request.
NormalizedBBox template_zoom_box(const TaskInstance& instance, std::uint64_t seed, const TemplateOptions& options);

class TemplatePolicy : public PolicyBackend {
public:
    TemplatePolicy(Template t, std::uint64_t seed, TemplateOptions options = {});

    void register_task(std::shared_ptr<const TaskInstance> instance);
    ChatResponse complete(const ChatRequest& request) override;
    int max_concurrency() const override { return 64; }

private:
    Template template_;
    std::uint64_t seed_;
    TemplateOptions options_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<const TaskInstance>> tasks_;
};

/// Segmenter over a single known scene.
class SceneSegmenter : public SegmenterBackend {
public:
    explicit SceneSegmenter(std::shared_ptr<const SyntheticScene> scene) : scene_(std::move(scene)) {}
    Mask segment(const SegmentRequest& request) override { return oracle_mask(*scene_, request.action); }
    int max_concurrency() const override { return 64; }

private:
    std::shared_ptr<const SyntheticScene> scene_;
};

enum class ToyContext { NeedleIllegible = 0, NeedleLegible = 1, Segmentation = 2, VisualMath = 3 };

inline constexpr int kToyContextCount = 4;

class SyntheticEnvironment : public ToyEnvironment {
public:
    explicit SyntheticEnvironment(std::vector<std::shared_ptr<const TaskInstance>> tasks, TemplateOptions options = {});

    int context_count() const override { return kToyContextCount; }
    std::vector<std::size_t> tasks_of(TaskFamily family) const override;
    int context_of(std::size_t task) const override;
    const TaskSpec& task(std::size_t index) const override { return tasks_.at(index)->task; }
    Trajectory rollout(std::size_t task, Template t, std::uint64_t seed, const EpisodeConfig& episode,
                       const RewardConfig& reward) const override;

    std::size_t size() const { return tasks_.size(); }

private:
    std::vector<std::shared_ptr<const TaskInstance>> tasks_;
    TemplateOptions options_;
};

} // namespace aperture
