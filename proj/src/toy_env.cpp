#include "aperture/toy_env.hpp"

#include "aperture/error.hpp"

#include <algorithm>
#include <cmath>

namespace aperture {

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t hash_id(const std::string& id) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : id) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

PixelRect union_box(const std::vector<const Glyph*>& glyphs) {
    int x0 = glyphs.front()->box.x;
    int y0 = glyphs.front()->box.y;
    int x1 = glyphs.front()->box.right();
    int y1 = glyphs.front()->box.bottom();
    for (const auto* g : glyphs) {
        x0 = std::min(x0, g->box.x);
        y0 = std::min(y0, g->box.y);
        x1 = std::max(x1, g->box.right());
        y1 = std::max(y1, g->box.bottom());
    }
    return {x0, y0, x1 - x0, y1 - y0};
}

PixelRect shape_box(const ShapeGeometry& g) {
    if (const auto* r = std::get_if<PixelRect>(&g)) return *r;
    const auto& d = std::get<Disk>(g);
    const int x0 = static_cast<int>(std::floor(d.cx - d.radius));
    const int y0 = static_cast<int>(std::floor(d.cy - d.radius));
    const int x1 = static_cast<int>(std::ceil(d.cx + d.radius));
    const int y1 = static_cast<int>(std::ceil(d.cy + d.radius));
    return {x0, y0, x1 - x0, y1 - y0};
}

const SceneShape& target_shape(const TaskInstance& instance) {
    const auto it = instance.task.meta.find("target_shape");
    if (it == instance.task.meta.end()) throw Error(ErrorKind::InvalidTask, "segmentation task lacks a target shape");
    return instance.scene->shapes.at(static_cast<std::size_t>(std::stoul(it->second)));
}

PixelRect region_of_interest(const TaskInstance& instance) {
    if (instance.task.family() == TaskFamily::Segmentation) return shape_box(target_shape(instance).geometry);
    const auto glyphs = answer_glyphs(*instance.scene);
    if (glyphs.empty()) throw Error(ErrorKind::InvalidTask, "scene has no answer glyphs");
    return union_box(glyphs);
}

struct Perceived {
    PixelRect rect;
    const Mask* mask = nullptr;
    bool after_tool = false;
};

Perceived current_view(const TaskInstance& instance, std::span<const Message> history) {
    for (auto it = history.rbegin(); it != history.rend(); ++it) {
        if (it->role == Role::Assistant) break;
        if (it->tool_result && it->view) return {it->view->rect, it->view->mask.get(), true};
    }
    return {instance.scene->bounds(), nullptr, false};
}

bool legible(const TaskInstance& instance, const Perceived& view) {
    const auto glyphs = answer_glyphs(*instance.scene);
    if (glyphs.empty()) return false;
    return std::all_of(glyphs.begin(), glyphs.end(),
                       [&](const Glyph* g) { return glyph_readable(*instance.scene, *g, view.rect, view.mask); });
}

std::string answer_for(const TaskInstance& instance, bool readable, std::mt19937_64& guess) {
    const auto& task = instance.task;
    if (const auto* vqa = std::get_if<VqaTask>(&task.kind)) {
        if (readable) return vqa->ground_truth;
        return vqa->choices.at(std::uniform_int_distribution<std::size_t>(0, vqa->choices.size() - 1)(guess));
    }
    if (const auto* math = std::get_if<MathTask>(&task.kind)) {
        if (readable) return math->ground_truth;
        return std::to_string(std::uniform_int_distribution<int>(0, 18)(guess));
    }
    return task.meta.at("referent");
}

ApertureAction segment_action(const TaskInstance& instance, std::uint64_t seed, const TemplateOptions& options) {
    const auto& scene = *instance.scene;
    SegmentAction action;
    if (instance.task.family() == TaskFamily::Segmentation) {
        const auto& shape = target_shape(instance);
        PixelRect box = shape_box(shape.geometry);
        const int x0 = std::max(0, box.x - 2);
        const int y0 = std::max(0, box.y - 2);
        const int x1 = std::min(scene.width, box.right() + 2);
        const int y1 = std::min(scene.height, box.bottom() + 2);
        action.bbox = to_normalized_bbox({x0, y0, x1 - x0, y1 - y0}, scene.width, scene.height);
        const double cx = box.x + box.width / 2.0;
        const double cy = box.y + box.height / 2.0;
        action.points.push_back({cx * 1000.0 / scene.width, cy * 1000.0 / scene.height, 1});
        action.obj_label = shape.label;
    } else {
        action.bbox = template_zoom_box(instance, seed, options);
        const auto roi = region_of_interest(instance);
        action.points.push_back({(roi.x + roi.width / 2.0) * 1000.0 / scene.width,
                                 (roi.y + roi.height / 2.0) * 1000.0 / scene.height, 1});
        action.obj_label = "marking";
    }
    return action;
}

std::string describe_scene(const TaskInstance& instance) {
    const auto& scene = *instance.scene;
    return "The image is a " + std::to_string(scene.width) + "x" + std::to_string(scene.height) + " canvas with " +
           std::to_string(scene.shapes.size()) + " colored shapes.";
}

} // namespace

NormalizedBBox template_zoom_box(const TaskInstance& instance, std::uint64_t seed, const TemplateOptions& options) {
    const auto& scene = *instance.scene;
    const PixelRect roi = region_of_interest(instance);
    std::mt19937_64 rng(mix(seed, 1));
    std::uniform_int_distribution<int> jitter(-options.jitter, options.jitter);
    const int jx = jitter(rng);
    const int jy = jitter(rng);
    const int w = std::min({options.zoom_side, scene.width});
    const int h = std::min({options.zoom_side, scene.height});
    const int cx = roi.x + roi.width / 2 + jx;
    const int cy = roi.y + roi.height / 2 + jy;
    const PixelRect rect{std::clamp(cx - w / 2, 0, scene.width - w), std::clamp(cy - h / 2, 0, scene.height - h), w, h};
    return to_normalized_bbox(rect, scene.width, scene.height);
}

ChatResponse template_turn(const TaskInstance& instance, Template t, std::uint64_t seed, const TemplateOptions& options,
                           std::span<const Message> history) {
    const auto turn_index =
        std::count_if(history.begin(), history.end(), [](const Message& m) { return m.role == Role::Assistant; });
    const bool segmentation = instance.task.family() == TaskFamily::Segmentation;
    const Perceived view = current_view(instance, history);
    const bool readable = !segmentation && legible(instance, view);
    std::mt19937_64 guess(mix(seed, 2 + static_cast<std::uint64_t>(turn_index)));

    AssistantTurn turn;
    if (turn_index == 0) {
        turn.observation = describe_scene(instance);
        if (t == Template::AnswerDirectly) {
            turn.thinking = readable ? "Thinking: The detail is legible at this scale."
                                     : "Thinking: The detail is too small to make out; answering from the overview.";
            turn.answer = answer_for(instance, readable, guess);
        } else if (t == Template::SegmentThenAnswer) {
            turn.thinking = "Thinking: Isolating the relevant object with the segmentation tool.";
            turn.tool_call = to_payload(segment_action(instance, seed, options));
        } else {
            turn.thinking = "Thinking: The relevant detail is small; zooming in on it.";
            turn.tool_call = to_payload(ZoomAction{template_zoom_box(instance, seed, options), std::string("marking")});
        }
    } else if (t == Template::ZoomNoObserve && turn_index == 1) {
        turn.answer = answer_for(instance, readable, guess);
    } else {
        if (segmentation) {
            turn.observation = view.after_tool ? "The segmented view isolates a single object." : describe_scene(instance);
        } else {
            turn.observation = readable ? "The view shows the marking clearly." : "The view does not resolve the marking.";
        }
        turn.thinking = "Thinking: That is enough evidence to answer.";
        turn.answer = answer_for(instance, readable, guess);
    }

    ChatResponse out;
    out.text = render_assistant_turn(turn);
    out.token_logprobs = deterministic_tokens(out.text);
    out.latency = Seconds(0.25 + 0.01 * static_cast<double>(out.token_logprobs->size()));
    return out;
}

TemplatePolicy::TemplatePolicy(Template t, std::uint64_t seed, TemplateOptions options)
    : template_(t), seed_(seed), options_(options) {}

void TemplatePolicy::register_task(std::shared_ptr<const TaskInstance> instance) {
    std::lock_guard lock(mutex_);
    tasks_[instance->task.task_id] = std::move(instance);
}

ChatResponse TemplatePolicy::complete(const ChatRequest& request) {
    std::shared_ptr<const TaskInstance> instance;
    {
        std::lock_guard lock(mutex_);
        const auto it = tasks_.find(request.task_id);
        if (it == tasks_.end()) {
            throw Error(ErrorKind::InternalError, "template policy has no task '" + request.task_id + "'");
        }
        instance = it->second;
    }
    return template_turn(*instance, template_, mix(seed_, hash_id(request.task_id)), options_, request.messages);
}

// ---------------------------------------------------------------------------

SyntheticEnvironment::SyntheticEnvironment(std::vector<std::shared_ptr<const TaskInstance>> tasks,
                                           TemplateOptions options)
    : tasks_(std::move(tasks)), options_(options) {}

std::vector<std::size_t> SyntheticEnvironment::tasks_of(TaskFamily family) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < tasks_.size(); ++i) {
        if (tasks_[i]->task.family() == family) out.push_back(i);
    }
    return out;
}

int SyntheticEnvironment::context_of(std::size_t task) const {
    const auto& spec = tasks_.at(task)->task;
    switch (spec.family()) {
    case TaskFamily::Segmentation: return static_cast<int>(ToyContext::Segmentation);
    case TaskFamily::VisualMath: return static_cast<int>(ToyContext::VisualMath);
    case TaskFamily::FineGrainedVQA: break;
    }
    const auto it = spec.meta.find("legible");
    const bool legible_task = it != spec.meta.end() && it->second == "1";
    return static_cast<int>(legible_task ? ToyContext::NeedleLegible : ToyContext::NeedleIllegible);
}

namespace {

class FixedTemplatePolicy : public PolicyBackend {
public:
    FixedTemplatePolicy(const TaskInstance& instance, Template t, std::uint64_t seed, const TemplateOptions& options)
        : instance_(instance), template_(t), seed_(seed), options_(options) {}

    ChatResponse complete(const ChatRequest& request) override {
        return template_turn(instance_, template_, seed_, options_, request.messages);
    }

private:
    const TaskInstance& instance_;
    Template template_;
    std::uint64_t seed_;
    const TemplateOptions& options_;
};

} // namespace

Trajectory SyntheticEnvironment::rollout(std::size_t task, Template t, std::uint64_t seed, const EpisodeConfig& episode,
                                         const RewardConfig& reward) const {
    const auto& instance = *tasks_.at(task);
    FixedTemplatePolicy policy(instance, t, seed, options_);
    SceneSegmenter segmenter(instance.scene);
    EpisodeConfig config = episode;
    config.seed = seed;
    auto traj = run_episode(policy, segmenter, instance.task, config);
    traj.reward = score_trajectory(instance.task, traj, reward);
    return traj;
}

} // namespace aperture
