#include "aperture/agrpo.hpp"

#include "aperture/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace aperture {

void AgrpoConfig::validate() const {
    if (group_size < 2) throw Error(ErrorKind::ConfigError, "agrpo: group_size must be at least 2");
    if (!(eps_low > 0) || !(eps_high >= eps_low)) {
        throw Error(ErrorKind::ConfigError, "agrpo: need eps_high >= eps_low > 0");
    }
    if (kl_weight != 0) throw Error(ErrorKind::ConfigError, "agrpo: kl_weight is fixed at 0");
    if (!(std_floor > 0)) throw Error(ErrorKind::ConfigError, "agrpo: std_floor must be positive");
}

std::vector<double> group_advantages(std::span<const double> rewards, const AgrpoConfig& config) {
    if (rewards.size() < 2) {
        throw Error(ErrorKind::GroupTooSmall, "group of " + std::to_string(rewards.size()) + " cannot form a baseline");
    }
    std::vector<double> out(rewards.size(), 0.0);
    if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards.front(); })) return out;
    const double n = static_cast<double>(rewards.size());
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
    double ss = 0;
    for (double r : rewards) ss += (r - mean) * (r - mean);
    const double sd = std::sqrt(ss / (n - 1));
    for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / (sd + config.std_floor);
    return out;
}

AdvantageVector broadcast_token_advantages(const Trajectory& trajectory, double adv) {
    AdvantageVector out;
    out.per_trajectory = adv;
    for (std::size_t i = 0; i < trajectory.steps.size(); ++i) {
        const auto& step = trajectory.steps[i];
        if (!step.tokens) {
            throw Error(ErrorKind::MissingTokenMetadata,
                        "step " + std::to_string(i) + " of " + trajectory.task_id + " has no token metadata");
        }
        out.per_token.insert(out.per_token.end(), step.tokens->size(), adv);
        out.mask.insert(out.mask.end(), step.tokens->size(), 1);
        out.per_token.insert(out.per_token.end(), static_cast<std::size_t>(step.env_tokens), 0.0);
        out.mask.insert(out.mask.end(), static_cast<std::size_t>(step.env_tokens), 0);
    }
    return out;
}

SurrogateResult clipped_surrogate(std::span<const double> logp_new, std::span<const double> logp_old,
                                  const AdvantageVector& adv, const AgrpoConfig& config) {
    const std::size_t n = logp_new.size();
    if (logp_old.size() != n || adv.per_token.size() != n || adv.mask.size() != n) {
        throw Error(ErrorKind::LengthMismatch, "logp_new " + std::to_string(n) + ", logp_old " +
                                                   std::to_string(logp_old.size()) + ", advantages " +
                                                   std::to_string(adv.per_token.size()));
    }
    SurrogateResult out;
    out.grad_logp.assign(n, 0.0);
    const auto active = std::count(adv.mask.begin(), adv.mask.end(), std::uint8_t{1});
    if (active == 0) return out;
    const double scale = 1.0 / static_cast<double>(active);
    double objective = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!adv.mask[i]) continue;
        const double a = adv.per_token[i];
        const double rho = std::exp(logp_new[i] - logp_old[i]);
        const double unclipped = rho * a;
        const double clipped = std::clamp(rho, 1.0 - config.eps_low, 1.0 + config.eps_high) * a;
        if (unclipped <= clipped) {
            objective += unclipped;
            out.grad_logp[i] = -scale * unclipped;
        } else {
            objective += clipped;
        }
    }
    out.loss = -scale * objective;
    return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(StageKind kind) { return kind == StageKind::SegWarmup ? "seg-warmup" : "multi-task"; }

CurriculumStage::CurriculumStage(StageKind kind, std::array<double, 3> weights, int step_budget)
    : kind_(kind), weights_(weights), step_budget_(step_budget) {
    double sum = 0;
    for (double w : weights_) {
        if (!(w >= 0) || !std::isfinite(w)) throw Error(ErrorKind::InvalidStage, "mixture weights must be non-negative");
        sum += w;
    }
    if (std::fabs(sum - 1.0) > 1e-9) {
        throw Error(ErrorKind::InvalidStage, "mixture weights sum to " + std::to_string(sum) + ", not 1");
    }
    if (kind_ == StageKind::SegWarmup && weights_[static_cast<int>(TaskFamily::Segmentation)] != 1.0) {
        throw Error(ErrorKind::InvalidStage, "the warm-up stage draws segmentation tasks only");
    }
    if (step_budget_ < 0) throw Error(ErrorKind::InvalidStage, "step budget must be non-negative");
}

CurriculumStage CurriculumStage::seg_warmup(int step_budget) {
    return {StageKind::SegWarmup, {0.0, 0.0, 1.0}, step_budget};
}

CurriculumStage CurriculumStage::multi_task(std::array<double, 3> weights, int step_budget) {
    return {StageKind::MultiTask, weights, step_budget};
}

TaskFamily CurriculumStage::sample_family(std::mt19937_64& rng) const {
    if (kind_ == StageKind::SegWarmup) return TaskFamily::Segmentation;
    std::discrete_distribution<int> pick(weights_.begin(), weights_.end());
    return static_cast<TaskFamily>(pick(rng));
}

void GeneratorRegistry::add(TaskFamily family, TaskGenerator generator) { generators_[family] = std::move(generator); }

bool GeneratorRegistry::has(TaskFamily family) const { return generators_.count(family) > 0; }

TaskSpec GeneratorRegistry::generate(TaskFamily family, std::mt19937_64& rng) const {
    const auto it = generators_.find(family);
    if (it == generators_.end()) {
        throw Error(ErrorKind::UnknownFamily, "no generator registered for " + std::string(to_string(family)));
    }
    return it->second(rng);
}

TaskSpec curriculum_sample(const CurriculumStage& stage, const GeneratorRegistry& registry, std::mt19937_64& rng) {
    return registry.generate(stage.sample_family(rng), rng);
}

// ---------------------------------------------------------------------------

std::string_view to_string(Template t) {
    switch (t) {
    case Template::AnswerDirectly: return "answer-directly";
    case Template::ZoomThenAnswer: return "zoom-then-answer";
    case Template::SegmentThenAnswer: return "segment-then-answer";
    case Template::ZoomNoObserve: return "zoom-no-observe";
    }
    return "answer-directly";
}

Template parse_template(std::string_view name) {
    for (int i = 0; i < kTemplateCount; ++i) {
        if (to_string(static_cast<Template>(i)) == name) return static_cast<Template>(i);
    }
    throw Error(ErrorKind::ParamError, "unknown template '" + std::string(name) + "'");
}

int template_apertures(Template t) { return t == Template::AnswerDirectly ? 0 : 1; }

ToyPolicy::ToyPolicy(int contexts) : contexts_(contexts), logits_(static_cast<std::size_t>(contexts) * kTemplateCount, 0.0) {
    if (contexts < 1) throw Error(ErrorKind::ParamError, "a toy policy needs at least one context");
}

std::array<double, kTemplateCount> ToyPolicy::probabilities(int context) const {
    const double* row = logits_.data() + static_cast<std::size_t>(context) * kTemplateCount;
    const double top = *std::max_element(row, row + kTemplateCount);
    std::array<double, kTemplateCount> p{};
    double z = 0;
    for (int i = 0; i < kTemplateCount; ++i) z += (p[i] = std::exp(row[i] - top));
    for (auto& v : p) v /= z;
    return p;
}

double ToyPolicy::log_prob(int context, Template t) const {
    const double* row = logits_.data() + static_cast<std::size_t>(context) * kTemplateCount;
    const double top = *std::max_element(row, row + kTemplateCount);
    double z = 0;
    for (int i = 0; i < kTemplateCount; ++i) z += std::exp(row[i] - top);
    return row[static_cast<int>(t)] - top - std::log(z);
}

double ToyPolicy::entropy(int context) const {
    double h = 0;
    for (double p : probabilities(context)) {
        if (p > 0) h -= p * std::log(p);
    }
    return h;
}

Template ToyPolicy::sample(int context, std::mt19937_64& rng) const {
    const auto p = probabilities(context);
    std::discrete_distribution<int> pick(p.begin(), p.end());
    return static_cast<Template>(pick(rng));
}

void ToyPolicy::accumulate_log_prob_grad(int context, Template t, double scale, std::span<double> grad) const {
    const auto p = probabilities(context);
    const std::size_t base = static_cast<std::size_t>(context) * kTemplateCount;
    for (int i = 0; i < kTemplateCount; ++i) {
        grad[base + static_cast<std::size_t>(i)] += scale * ((i == static_cast<int>(t) ? 1.0 : 0.0) - p[i]);
    }
}

void PolicyBatch::append(const AdvantageVector& trajectory_adv, std::optional<DecisionToken> decision,
                         double decision_logp_old) {
    const std::size_t n = trajectory_adv.per_token.size();
    const std::size_t first = adv.per_token.size();
    adv.per_token.insert(adv.per_token.end(), trajectory_adv.per_token.begin(), trajectory_adv.per_token.end());
    adv.mask.insert(adv.mask.end(), trajectory_adv.mask.begin(), trajectory_adv.mask.end());
    decisions.resize(first + n);
    logp_old.resize(first + n, 0.0);
    if (!decision) return;
    // The decision is the first generated token of the trajectory.
    for (std::size_t i = 0; i < n; ++i) {
        if (trajectory_adv.mask[i]) {
            decisions[first + i] = decision;
            logp_old[first + i] = decision_logp_old;
            return;
        }
    }
}

double policy_surrogate(const ToyPolicy& policy, const PolicyBatch& batch, const AgrpoConfig& config,
                        std::vector<double>* grad) {
    std::vector<double> logp_new(batch.logp_old.size(), 0.0);
    for (std::size_t i = 0; i < logp_new.size(); ++i) {
        if (const auto& d = batch.decisions[i]) logp_new[i] = policy.log_prob(d->context, d->choice);
    }
    const auto result = clipped_surrogate(logp_new, batch.logp_old, batch.adv, config);
    if (grad != nullptr) {
        grad->assign(policy.parameter_count(), 0.0);
        for (std::size_t i = 0; i < logp_new.size(); ++i) {
            const auto& d = batch.decisions[i];
            if (d && result.grad_logp[i] != 0) policy.accumulate_log_prob_grad(d->context, d->choice, result.grad_logp[i], *grad);
        }
    }
    return result.loss;
}

// ---------------------------------------------------------------------------

double mean_entropy(const ToyPolicy& policy, const ToyEnvironment& env) {
    double total = 0;
    std::size_t count = 0;
    for (auto family : {TaskFamily::VisualMath, TaskFamily::FineGrainedVQA, TaskFamily::Segmentation}) {
        for (auto task : env.tasks_of(family)) {
            total += policy.entropy(env.context_of(task));
            ++count;
        }
    }
    return count == 0 ? 0.0 : total / static_cast<double>(count);
}

namespace {

struct Adam {
    std::vector<double> m;
    std::vector<double> v;
    int t = 0;
    double lr;

    Adam(std::size_t n, double learning_rate) : m(n, 0.0), v(n, 0.0), lr(learning_rate) {}

    void step(std::span<double> params, const std::vector<double>& grad) {
        constexpr double b1 = 0.9;
        constexpr double b2 = 0.999;
        constexpr double eps = 1e-8;
        ++t;
        const double c1 = 1.0 - std::pow(b1, t);
        const double c2 = 1.0 - std::pow(b2, t);
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i] = b1 * m[i] + (1 - b1) * grad[i];
            v[i] = b2 * v[i] + (1 - b2) * grad[i] * grad[i];
            params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
};

const CurriculumStage& stage_at(const std::vector<CurriculumStage>& stages, int step) {
    int offset = 0;
    for (const auto& s : stages) {
        offset += s.step_budget();
        if (step < offset) return s;
    }
    return stages.back();
}

} // namespace

TrainReport train_toy(ToyPolicy& policy, const ToyEnvironment& env, const std::vector<CurriculumStage>& stages,
                      const RewardConfig& reward, const AgrpoConfig& agrpo, const TrainOptions& options) {
    agrpo.validate();
    reward.validate();
    if (stages.empty()) throw Error(ErrorKind::InvalidStage, "training needs at least one curriculum stage");
    if (policy.contexts() < env.context_count()) {
        throw Error(ErrorKind::ParamError, "policy has fewer contexts than the environment");
    }
    TrainReport report;
    report.initial_entropy = mean_entropy(policy, env);
    report.initial_parameters.assign(policy.parameters().begin(), policy.parameters().end());

    std::mt19937_64 rng(options.seed);
    Adam adam(policy.parameter_count(), options.learning_rate);
    std::vector<double> grad;

    for (int step = 0; step < options.steps; ++step) {
        const auto& stage = stage_at(stages, step);
        PolicyBatch batch;
        double reward_sum = 0;
        double aperture_sum = 0;
        double correct_sum = 0;
        int episodes = 0;
        for (int p = 0; p < options.prompts_per_step; ++p) {
            const TaskFamily family = stage.sample_family(rng);
            const auto pool = env.tasks_of(family);
            if (pool.empty()) {
                throw Error(ErrorKind::UnknownFamily, "environment has no " + std::string(to_string(family)) + " tasks");
            }
            const std::size_t task = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
            const int context = env.context_of(task);

            std::vector<Template> choices;
            std::vector<Trajectory> group;
            std::vector<double> rewards;
            for (int g = 0; g < agrpo.group_size; ++g) {
                const Template t = policy.sample(context, rng);
                auto traj = env.rollout(task, t, rng(), options.episode, reward);
                const auto& r = traj.reward.value();
                rewards.push_back(r.r_final);
                reward_sum += r.r_final;
                aperture_sum += traj.aperture_count();
                correct_sum += r.r_task;
                ++episodes;
                choices.push_back(t);
                group.push_back(std::move(traj));
            }
            const auto advantages = group_advantages(rewards, agrpo);
            for (std::size_t g = 0; g < group.size(); ++g) {
                batch.append(broadcast_token_advantages(group[g], advantages[g]), DecisionToken{context, choices[g]},
                             policy.log_prob(context, choices[g]));
            }
        }

        report.points.push_back({step, reward_sum / episodes, mean_entropy(policy, env), aperture_sum / episodes,
                                 correct_sum / episodes});

        for (int u = 0; u < options.updates_per_step; ++u) {
            policy_surrogate(policy, batch, agrpo, &grad);
            // An all-zero gradient (e.g. every group had equal rewards) leaves the policy untouched.
            if (std::all_of(grad.begin(), grad.end(), [](double g) { return g == 0; })) break;
            adam.step(policy.parameters(), grad);
            for (double v : policy.parameters()) {
                if (!std::isfinite(v)) {
                    throw Error(ErrorKind::DivergenceDetected, "non-finite parameter at step " + std::to_string(step));
                }
            }
        }
    }
    report.final_parameters.assign(policy.parameters().begin(), policy.parameters().end());
    return report;
}

EvalReport evaluate_toy(const ToyPolicy& policy, const ToyEnvironment& env, const RewardConfig& reward,
                        const EpisodeConfig& episode, int samples_per_task, std::uint64_t seed) {
    EvalReport out;
    std::mt19937_64 rng(seed);
    double apertures = 0;
    double correct = 0;
    double total_reward = 0;
    for (auto family : {TaskFamily::VisualMath, TaskFamily::FineGrainedVQA, TaskFamily::Segmentation}) {
        for (auto task : env.tasks_of(family)) {
            const int context = env.context_of(task);
            for (int k = 0; k < samples_per_task; ++k) {
                const auto traj = env.rollout(task, policy.sample(context, rng), rng(), episode, reward);
                apertures += traj.aperture_count();
                correct += traj.reward->r_task;
                total_reward += traj.reward->r_final;
                ++out.episodes;
            }
        }
    }
    if (out.episodes > 0) {
        out.mean_aperture_count = apertures / out.episodes;
        out.accuracy = correct / out.episodes;
        out.mean_reward = total_reward / out.episodes;
    }
    return out;
}

namespace {

std::string shortest(double v) {
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

double parse_double(const std::string& s) {
    double v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw Error(ErrorKind::LogCorrupt, "bad number '" + s + "'");
    return v;
}

} // namespace

void write_train_series(std::ostream& out, const TrainReport& report) {
    out << "# initial_entropy " << shortest(report.initial_entropy) << "\n";
    out << "# step mean_reward entropy mean_aperture_count accuracy\n";
    for (const auto& p : report.points) {
        out << p.step << ' ' << shortest(p.mean_reward) << ' ' << shortest(p.entropy) << ' '
            << shortest(p.mean_aperture_count) << ' ' << shortest(p.accuracy) << "\n";
    }
}

TrainReport read_train_series(std::istream& in) {
    TrainReport report;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream fields(line);
        if (line.front() == '#') {
            std::string hash;
            std::string key;
            std::string value;
            fields >> hash >> key >> value;
            if (key == "initial_entropy") report.initial_entropy = parse_double(value);
            continue;
        }
        std::string step;
        std::string cols[4];
        fields >> step >> cols[0] >> cols[1] >> cols[2] >> cols[3];
        try {
            if (cols[3].empty()) throw Error(ErrorKind::LogCorrupt, "expected 5 columns");
            report.points.push_back({std::stoi(step), parse_double(cols[0]), parse_double(cols[1]),
                                     parse_double(cols[2]), parse_double(cols[3])});
        } catch (const std::exception& e) {
            throw Error(ErrorKind::LogCorrupt, "line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return report;
}

} // namespace aperture
