#pragma once

#include "aperture/image.hpp"

#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

namespace aperture {

enum class TaskFamily { VisualMath, FineGrainedVQA, Segmentation };

std::string_view to_string(TaskFamily family);
TaskFamily parse_task_family(std::string_view name);

struct VqaTask {
    std::string question;
    std::string ground_truth;
    std::vector<std::string> choices;  // empty for open-ended questions
};

struct MathTask {
    std::string question;
    std::string ground_truth;
};

struct SegmentationTask {
    std::string instruction;
    Mask gt_mask;
};

struct TaskSpec {
    std::string task_id;
    std::variant<VqaTask, MathTask, SegmentationTask> kind;
    std::shared_ptr<const Image> image;
    std::map<std::string, std::string> meta;

    TaskFamily family() const;
    const std::string& query() const;
};

} // namespace aperture
