#pragma once

#include "aperture/image.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace aperture {

struct TaskSpec;
struct Trajectory;

struct RewardConfig {
    double beta1 = 0.8;
    double beta2 = 1.2;
    double alpha = 0.3;          // weight of the S-measure in the segmentation reward
    double seg_clip = 0.1;       // segmentation rewards below this become 0
    double aperture_gate = 0.3;  // r_task must exceed this to earn the aperture bonus

    static RewardConfig alternative() { return {1.0, 0.8, 0.3, 0.1, 0.3}; }

    /// Throws ConfigError when a weight or threshold is out of range.
    void validate() const;

    friend bool operator==(const RewardConfig&, const RewardConfig&) = default;
};

struct RewardBreakdown {
    double r_task = 0;
    std::optional<double> r_iou;
    std::optional<double> r_s;
    std::optional<double> r_seg;
    double r_aperture = 0;
    double r_final = 0;
    RewardConfig config_used;

    friend bool operator==(const RewardBreakdown&, const RewardBreakdown&) = default;
};

/// |pred & gt| / |pred | gt|; two empty masks agree perfectly and score 1.
double iou(const Mask& pred, const Mask& gt);

/// Structure measure with an object-aware and a region-aware term, balanced 0.5/0.5.
double s_measure(const Mask& pred, const Mask& gt);

/// (1 - alpha) * iou + alpha * s, zeroed below seg_clip.
double seg_reward(const Mask& pred, const Mask& gt, const RewardConfig& config);
double seg_reward_from_scores(double iou_score, double s_score, const RewardConfig& config);

/// Trim, case-fold and strip surrounding punctuation.
std::string normalize_answer(std::string_view text);
/// For multiple-choice answers: the leading option letter, if any.
std::optional<char> option_letter(std::string_view normalized);
bool answers_match(std::string_view answer, std::string_view ground_truth, bool multiple_choice, bool numeric);

/// Segmentation tasks use the config's alpha and clip.
double task_reward(const TaskSpec& task, const Trajectory& trajectory, const RewardConfig& config = {});
double aperture_reward(const Trajectory& trajectory, double r_task, const RewardConfig& config);
double final_reward(double r_task, double r_aperture, const RewardConfig& config);

/// Full breakdown. Trajectories that took an observation penalty score 0 on
/// both components.
RewardBreakdown score_trajectory(const TaskSpec& task, const Trajectory& trajectory, const RewardConfig& config);

nlohmann::json to_json(const RewardConfig& config);
RewardConfig reward_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const RewardBreakdown& breakdown);
RewardBreakdown reward_breakdown_from_json(const nlohmann::json& doc);

} // namespace aperture
