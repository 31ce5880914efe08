#include "aperture/task.hpp"

#include "aperture/error.hpp"

namespace aperture {

std::string_view to_string(TaskFamily family) {
    switch (family) {
    case TaskFamily::VisualMath: return "visual-math";
    case TaskFamily::FineGrainedVQA: return "fine-grained-vqa";
    case TaskFamily::Segmentation: return "segmentation";
    }
    return "fine-grained-vqa";
}

TaskFamily parse_task_family(std::string_view name) {
    if (name == "visual-math") return TaskFamily::VisualMath;
    if (name == "fine-grained-vqa") return TaskFamily::FineGrainedVQA;
    if (name == "segmentation") return TaskFamily::Segmentation;
    throw Error(ErrorKind::UnknownFamily, "unknown task family '" + std::string(name) + "'");
}

TaskFamily TaskSpec::family() const {
    if (std::holds_alternative<VqaTask>(kind)) return TaskFamily::FineGrainedVQA;
    if (std::holds_alternative<MathTask>(kind)) return TaskFamily::VisualMath;
    return TaskFamily::Segmentation;
}

const std::string& TaskSpec::query() const {
    if (const auto* v = std::get_if<VqaTask>(&kind)) return v->question;
    if (const auto* m = std::get_if<MathTask>(&kind)) return m->question;
    return std::get<SegmentationTask>(kind).instruction;
}

} // namespace aperture
