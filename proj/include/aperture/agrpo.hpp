#pragma once

// Group-relative advantages, the clip-higher surrogate, the two-stage task
// curriculum, and a desk-scale trainer for a categorical template policy.

#include "aperture/reward.hpp"
#include "aperture/tao_loop.hpp"
#include "aperture/task.hpp"

#include <array>
#include <functional>
#include <iosfwd>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace aperture {

struct AgrpoConfig {
    int group_size = 8;
    double eps_low = 0.2;
    double eps_high = 0.28;
    double kl_weight = 0.0;
    double std_floor = 1e-6;

    void validate() const;
};

struct RolloutGroup {
    std::string prompt_id;
    std::vector<Trajectory> trajectories;
    std::vector<double> rewards;
};

struct AdvantageVector {
    double per_trajectory = 0;
    std::vector<double> per_token;
    /// 1 for policy-generated tokens, 0 for injected environment tokens.
    std::vector<std::uint8_t> mask;
};

/// (r_i - mean) / (sample std + std_floor); a group of identical rewards maps to zeros.
std::vector<double> group_advantages(std::span<const double> rewards, const AgrpoConfig& config);

/// Lays out a trajectory's tokens step by step: generated tokens carry `adv`,
/// the tool-result tokens that follow an aperture step are masked.
AdvantageVector broadcast_token_advantages(const Trajectory& trajectory, double adv);

struct SurrogateResult {
    double loss = 0;
    /// d loss / d logp_new per token (0 on masked tokens).
    std::vector<double> grad_logp;
};

/// Negated token-mean of min(rho * A, clip(rho, 1 - eps_low, 1 + eps_high) * A)
/// over unmasked tokens, rho = exp(logp_new - logp_old).
SurrogateResult clipped_surrogate(std::span<const double> logp_new, std::span<const double> logp_old,
                                  const AdvantageVector& adv, const AgrpoConfig& config);

// ---------------------------------------------------------------------------
// Curriculum

enum class StageKind { SegWarmup, MultiTask };

std::string_view to_string(StageKind kind);

class CurriculumStage {
public:
    /// Weights are indexed by TaskFamily (VisualMath, FineGrainedVQA, Segmentation).
    /// Throws InvalidStage when the mixture is not a distribution or a warm-up
    /// stage puts weight outside segmentation.
    CurriculumStage(StageKind kind, std::array<double, 3> weights, int step_budget);

    static CurriculumStage seg_warmup(int step_budget);
    static CurriculumStage multi_task(std::array<double, 3> weights, int step_budget);

    StageKind kind() const { return kind_; }
    const std::array<double, 3>& weights() const { return weights_; }
    int step_budget() const { return step_budget_; }

    TaskFamily sample_family(std::mt19937_64& rng) const;

private:
    StageKind kind_;
    std::array<double, 3> weights_;
    int step_budget_;
};

using TaskGenerator = std::function<TaskSpec(std::mt19937_64&)>;

class GeneratorRegistry {
public:
    void add(TaskFamily family, TaskGenerator generator);
    bool has(TaskFamily family) const;
    /// Throws UnknownFamily when nothing is registered for the family.
    TaskSpec generate(TaskFamily family, std::mt19937_64& rng) const;

private:
    std::map<TaskFamily, TaskGenerator> generators_;
};

TaskSpec curriculum_sample(const CurriculumStage& stage, const GeneratorRegistry& registry, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Toy policy

enum class Template { AnswerDirectly, ZoomThenAnswer, SegmentThenAnswer, ZoomNoObserve };

inline constexpr int kTemplateCount = 4;

std::string_view to_string(Template t);
Template parse_template(std::string_view name);
/// Aperture steps the template takes when it runs to completion.
int template_apertures(Template t);

/// Categorical logits over templates, one row per context.
class ToyPolicy {
public:
    explicit ToyPolicy(int contexts);

    int contexts() const { return contexts_; }
    std::size_t parameter_count() const { return logits_.size(); }
    std::span<double> parameters() { return logits_; }
    std::span<const double> parameters() const { return logits_; }

    std::array<double, kTemplateCount> probabilities(int context) const;
    double log_prob(int context, Template t) const;
    double entropy(int context) const;
    Template sample(int context, std::mt19937_64& rng) const;
    /// d log pi(t | context) / d logits, written into `grad` (parameter-sized, accumulated).
    void accumulate_log_prob_grad(int context, Template t, double scale, std::span<double> grad) const;

private:
    int contexts_;
    std::vector<double> logits_;
};

/// Rollouts for the trainer: a fixed pool of tasks, each tagged with the
/// policy context it is presented under.
class ToyEnvironment {
public:
    virtual ~ToyEnvironment() = default;
    virtual int context_count() const = 0;
    virtual std::vector<std::size_t> tasks_of(TaskFamily family) const = 0;
    virtual int context_of(std::size_t task) const = 0;
    virtual const TaskSpec& task(std::size_t index) const = 0;
    /// Runs one episode with the template fixed; the trajectory carries a reward.
    virtual Trajectory rollout(std::size_t task, Template t, std::uint64_t seed, const EpisodeConfig& episode,
                               const RewardConfig& reward) const = 0;
};

/// The token where a template choice is made.
struct DecisionToken {
    int context = 0;
    Template choice = Template::AnswerDirectly;
};

/// Token-aligned batch for the toy policy: decision tokens carry
/// log pi(choice | context); every other token has a fixed log-probability.
struct PolicyBatch {
    std::vector<std::optional<DecisionToken>> decisions;
    std::vector<double> logp_old;
    AdvantageVector adv;

    void append(const AdvantageVector& trajectory_adv, std::optional<DecisionToken> decision, double decision_logp_old);
};

/// Surrogate loss of the batch under `policy`; fills `grad` with d loss / d logits when given.
double policy_surrogate(const ToyPolicy& policy, const PolicyBatch& batch, const AgrpoConfig& config,
                        std::vector<double>* grad);

struct TrainOptions {
    int steps = 500;
    int prompts_per_step = 8;
    int updates_per_step = 2;
    double learning_rate = 0.05;
    std::uint64_t seed = 0;
    EpisodeConfig episode;
};

struct TrainPoint {
    int step = 0;
    double mean_reward = 0;
    double entropy = 0;
    double mean_aperture_count = 0;
    double accuracy = 0;

    friend bool operator==(const TrainPoint&, const TrainPoint&) = default;
};

struct TrainReport {
    double initial_entropy = 0;
    std::vector<double> initial_parameters;
    std::vector<TrainPoint> points;
    std::vector<double> final_parameters;
};

/// Mean policy entropy over the environment's contexts, weighted by task count.
double mean_entropy(const ToyPolicy& policy, const ToyEnvironment& env);

TrainReport train_toy(ToyPolicy& policy, const ToyEnvironment& env, const std::vector<CurriculumStage>& stages,
                      const RewardConfig& reward, const AgrpoConfig& agrpo, const TrainOptions& options);

struct EvalReport {
    double mean_aperture_count = 0;
    double accuracy = 0;
    double mean_reward = 0;
    int episodes = 0;
};

/// Samples `samples_per_task` templates per task from the policy and runs them.
EvalReport evaluate_toy(const ToyPolicy& policy, const ToyEnvironment& env, const RewardConfig& reward,
                        const EpisodeConfig& episode, int samples_per_task, std::uint64_t seed);

/// Line-oriented series: a header line then "step mean_reward entropy mean_aperture_count accuracy".
void write_train_series(std::ostream& out, const TrainReport& report);
TrainReport read_train_series(std::istream& in);

} // namespace aperture
