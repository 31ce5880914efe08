#include "aperture/reward.hpp"

#include "aperture/error.hpp"
#include "aperture/tao_loop.hpp"
#include "aperture/task.hpp"

#include <algorithm>
#include <cctype>
#include <cfloat>
#include <charconv>
#include <cmath>

namespace aperture {

namespace {

constexpr double kEps = DBL_EPSILON;

void require_same_size(const Mask& a, const Mask& b) {
    if (a.width() != b.width() || a.height() != b.height()) {
        throw Error(ErrorKind::DimensionMismatch, "masks are " + std::to_string(a.width()) + "x" +
                                                      std::to_string(a.height()) + " and " + std::to_string(b.width()) +
                                                      "x" + std::to_string(b.height()));
    }
}

// Mean/std similarity of `values` to an all-ones target.
double object_score(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    double sum = 0;
    for (double v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    double sd = 0;
    if (values.size() > 1) {
        double ss = 0;
        for (double v : values) ss += (v - mean) * (v - mean);
        sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return 2.0 * mean / (mean * mean + 1.0 + sd + kEps);
}

double object_term(const Mask& pred, const Mask& gt) {
    std::vector<double> fg;
    std::vector<double> bg;
    const auto p = pred.bits();
    const auto g = gt.bits();
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (g[i]) {
            fg.push_back(p[i] ? 1.0 : 0.0);
        } else {
            bg.push_back(p[i] ? 0.0 : 1.0);
        }
    }
    const double u = static_cast<double>(fg.size()) / static_cast<double>(g.size());
    return u * object_score(fg) + (1.0 - u) * object_score(bg);
}

// SSIM-style comparison of one block.
double block_score(const Mask& pred, const Mask& gt, int x0, int y0, int x1, int y1) {
    const double n = static_cast<double>(x1 - x0) * (y1 - y0);
    double sx = 0;
    double sy = 0;
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            sx += pred.get(x, y);
            sy += gt.get(x, y);
        }
    }
    const double mx = sx / n;
    const double my = sy / n;
    double vx = 0;
    double vy = 0;
    double cxy = 0;
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            const double dx = pred.get(x, y) - mx;
            const double dy = gt.get(x, y) - my;
            vx += dx * dx;
            vy += dy * dy;
            cxy += dx * dy;
        }
    }
    vx /= (n - 1 + kEps);
    vy /= (n - 1 + kEps);
    cxy /= (n - 1 + kEps);
    const double a = 4 * mx * my * cxy;
    const double b = (mx * mx + my * my) * (vx + vy);
    if (a != 0) return a / (b + kEps);
    if (b == 0) return 1.0;
    return 0.0;
}

// MATLAB-style round: halves go away from zero.
int round_half_away(double v) { return static_cast<int>(std::round(v)); }

double region_term(const Mask& pred, const Mask& gt) {
    const int w = gt.width();
    const int h = gt.height();
    int cx = 0;
    int cy = 0;
    const long long total = gt.count();
    if (total == 0) {
        cx = round_half_away(w / 2.0);
        cy = round_half_away(h / 2.0);
    } else {
        double sx = 0;
        double sy = 0;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (gt.get(x, y)) {
                    sx += x + 1;
                    sy += y + 1;
                }
            }
        }
        cx = round_half_away(sx / static_cast<double>(total));
        cy = round_half_away(sy / static_cast<double>(total));
    }
    // (cx, cy) is the 1-based index of the last column/row of the left/top blocks.
    const double area = static_cast<double>(w) * h;
    const double w1 = static_cast<double>(cx) * cy / area;
    const double w2 = static_cast<double>(w - cx) * cy / area;
    const double w3 = static_cast<double>(cx) * (h - cy) / area;
    const double w4 = 1.0 - w1 - w2 - w3;
    auto score = [&](int x0, int y0, int x1, int y1) {
        if (x1 <= x0 || y1 <= y0) return 0.0;
        return block_score(pred, gt, x0, y0, x1, y1);
    };
    return w1 * score(0, 0, cx, cy) + w2 * score(cx, 0, w, cy) + w3 * score(0, cy, cx, h) + w4 * score(cx, cy, w, h);
}

bool is_edge_punct(unsigned char c) { return std::ispunct(c) != 0 || std::isspace(c) != 0; }

std::optional<double> parse_number(std::string_view s) {
    std::string cleaned;
    for (char c : s) {
        if (c != ',') cleaned += c;
    }
    if (cleaned.empty()) return std::nullopt;
    double v = 0;
    const auto* begin = cleaned.data();
    const auto* end = cleaned.data() + cleaned.size();
    if (*begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v)) return std::nullopt;
    return v;
}

bool has_aperture_step(const Trajectory& trajectory) {
    return std::any_of(trajectory.steps.begin(), trajectory.steps.end(),
                       [](const Step& s) { return s.kind == StepKind::Aperture; });
}

} // namespace

void RewardConfig::validate() const {
    auto fail = [](const std::string& why) { throw Error(ErrorKind::ConfigError, "reward: " + why); };
    if (!(beta1 > 0) || !(beta2 > 0)) fail("beta1 and beta2 must be positive");
    if (!(alpha >= 0 && alpha <= 1)) fail("alpha must lie in [0, 1]");
    if (!(seg_clip >= 0 && seg_clip <= 1)) fail("seg_clip must lie in [0, 1]");
    if (!(aperture_gate >= 0 && aperture_gate <= 1)) fail("aperture_gate must lie in [0, 1]");
}

double iou(const Mask& pred, const Mask& gt) {
    require_same_size(pred, gt);
    long long inter = 0;
    long long uni = 0;
    const auto p = pred.bits();
    const auto g = gt.bits();
    for (std::size_t i = 0; i < p.size(); ++i) {
        inter += (p[i] && g[i]) ? 1 : 0;
        uni += (p[i] || g[i]) ? 1 : 0;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double s_measure(const Mask& pred, const Mask& gt) {
    require_same_size(pred, gt);
    const double n = static_cast<double>(gt.width()) * gt.height();
    if (n == 0) return 1.0;
    const double gt_mean = static_cast<double>(gt.count()) / n;
    const double pred_mean = static_cast<double>(pred.count()) / n;
    if (gt_mean == 0) return 1.0 - pred_mean;
    if (gt_mean == 1) return pred_mean;
    const double q = 0.5 * object_term(pred, gt) + 0.5 * region_term(pred, gt);
    return std::max(q, 0.0);
}

double seg_reward_from_scores(double iou_score, double s_score, const RewardConfig& config) {
    const double s = (1.0 - config.alpha) * iou_score + config.alpha * s_score;
    return s < config.seg_clip ? 0.0 : s;
}

double seg_reward(const Mask& pred, const Mask& gt, const RewardConfig& config) {
    return seg_reward_from_scores(iou(pred, gt), s_measure(pred, gt), config);
}

std::string normalize_answer(std::string_view text) {
    std::size_t b = 0;
    std::size_t e = text.size();
    while (b < e && is_edge_punct(static_cast<unsigned char>(text[b]))) ++b;
    while (e > b && is_edge_punct(static_cast<unsigned char>(text[e - 1]))) --e;
    std::string out;
    out.reserve(e - b);
    for (std::size_t i = b; i < e; ++i) out += static_cast<char>(std::tolower(static_cast<unsigned char>(text[i])));
    return out;
}

std::optional<char> option_letter(std::string_view normalized) {
    if (normalized.empty() || !std::isalpha(static_cast<unsigned char>(normalized[0]))) return std::nullopt;
    if (normalized.size() == 1) return normalized[0];
    const auto next = static_cast<unsigned char>(normalized[1]);
    if (std::isalnum(next) != 0) return std::nullopt;
    return normalized[0];
}

bool answers_match(std::string_view answer, std::string_view ground_truth, bool multiple_choice, bool numeric) {
    const auto a = normalize_answer(answer);
    const auto g = normalize_answer(ground_truth);
    if (a == g) return !a.empty();
    if (multiple_choice) {
        const auto la = option_letter(a);
        const auto lg = option_letter(g);
        return la && lg && *la == *lg;
    }
    if (numeric) {
        const auto na = parse_number(a);
        const auto ng = parse_number(g);
        return na && ng && std::fabs(*na - *ng) <= 1e-9 * std::max(1.0, std::fabs(*ng));
    }
    return false;
}

double task_reward(const TaskSpec& task, const Trajectory& trajectory, const RewardConfig& config) {
    if (const auto* seg = std::get_if<SegmentationTask>(&task.kind)) {
        if (seg->gt_mask.width() == 0) throw Error(ErrorKind::MissingGroundTruth, "task " + task.task_id + " has no mask");
        if (trajectory.termination.kind != Termination::Kind::Answered) return 0.0;
        const auto mask = final_predicted_mask(trajectory);
        if (!mask) return 0.0;
        return seg_reward(*mask, seg->gt_mask, config);
    }
    const std::string* gt = nullptr;
    bool multiple_choice = false;
    bool numeric = false;
    if (const auto* vqa = std::get_if<VqaTask>(&task.kind)) {
        gt = &vqa->ground_truth;
        multiple_choice = !vqa->choices.empty();
    } else {
        gt = &std::get<MathTask>(task.kind).ground_truth;
        numeric = true;
    }
    if (normalize_answer(*gt).empty()) throw Error(ErrorKind::MissingGroundTruth, "task " + task.task_id + " has no answer");
    if (trajectory.termination.kind != Termination::Kind::Answered || !trajectory.final_answer) return 0.0;
    return answers_match(*trajectory.final_answer, *gt, multiple_choice, numeric) ? 1.0 : 0.0;
}

double aperture_reward(const Trajectory& trajectory, double r_task, const RewardConfig& config) {
    return (has_aperture_step(trajectory) && r_task > config.aperture_gate) ? 1.0 : 0.0;
}

double final_reward(double r_task, double r_aperture, const RewardConfig& config) {
    return config.beta1 * r_task + config.beta2 * r_aperture;
}

RewardBreakdown score_trajectory(const TaskSpec& task, const Trajectory& trajectory, const RewardConfig& config) {
    RewardBreakdown out;
    out.config_used = config;
    if (const auto* seg = std::get_if<SegmentationTask>(&task.kind)) {
        if (seg->gt_mask.width() == 0) throw Error(ErrorKind::MissingGroundTruth, "task " + task.task_id + " has no mask");
        const auto mask = final_predicted_mask(trajectory);
        if (trajectory.termination.kind == Termination::Kind::Answered && mask) {
            out.r_iou = iou(*mask, seg->gt_mask);
            out.r_s = s_measure(*mask, seg->gt_mask);
            out.r_seg = seg_reward_from_scores(*out.r_iou, *out.r_s, config);
        } else {
            out.r_seg = 0.0;
        }
        out.r_task = *out.r_seg;
    } else {
        out.r_task = task_reward(task, trajectory);
    }
    if (trajectory.penalties > 0) out.r_task = 0.0;
    out.r_aperture = aperture_reward(trajectory, out.r_task, config);
    out.r_final = final_reward(out.r_task, out.r_aperture, config);
    return out;
}

nlohmann::json to_json(const RewardConfig& c) {
    return {{"beta1", c.beta1},
            {"beta2", c.beta2},
            {"alpha", c.alpha},
            {"seg_clip", c.seg_clip},
            {"aperture_gate", c.aperture_gate}};
}

RewardConfig reward_config_from_json(const nlohmann::json& doc) {
    RewardConfig c;
    try {
        c.beta1 = doc.value("beta1", c.beta1);
        c.beta2 = doc.value("beta2", c.beta2);
        c.alpha = doc.value("alpha", c.alpha);
        c.seg_clip = doc.value("seg_clip", c.seg_clip);
        c.aperture_gate = doc.value("aperture_gate", c.aperture_gate);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigError, std::string("reward: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::json to_json(const RewardBreakdown& r) {
    nlohmann::json doc{{"r_task", r.r_task}, {"r_aperture", r.r_aperture}, {"r_final", r.r_final}};
    if (r.r_iou) doc["r_iou"] = *r.r_iou;
    if (r.r_s) doc["r_s"] = *r.r_s;
    if (r.r_seg) doc["r_seg"] = *r.r_seg;
    doc["config"] = to_json(r.config_used);
    return doc;
}

RewardBreakdown reward_breakdown_from_json(const nlohmann::json& doc) {
    RewardBreakdown r;
    r.r_task = doc.at("r_task").get<double>();
    r.r_aperture = doc.at("r_aperture").get<double>();
    r.r_final = doc.at("r_final").get<double>();
    if (doc.contains("r_iou")) r.r_iou = doc["r_iou"].get<double>();
    if (doc.contains("r_s")) r.r_s = doc["r_s"].get<double>();
    if (doc.contains("r_seg")) r.r_seg = doc["r_seg"].get<double>();
    r.config_used = reward_config_from_json(doc.at("config"));
    return r;
}

} // namespace aperture
