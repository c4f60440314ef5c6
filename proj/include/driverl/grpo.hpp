// Copyright 2026 the driverl authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "driverl/policy.hpp"
#include "driverl/reward.hpp"
#include "driverl/telemetry.hpp"
#include "driverl/types.hpp"

namespace driverl {

enum class RefreshMode { PerStep, PerEpoch };

struct GrpoConfig {
    int group_size = 8;            // G rollouts per prompt
    double clip_epsilon = 0.2;
    double kl_beta = 1e-2;
    int prompt_batch_size = 8;     // desk default; paper-scale value is 128
    int epochs = 5;
    RefreshMode old_policy_refresh = RefreshMode::PerStep;
    int max_rollout_tokens = 0;    // 0 -> use the policy's max_len
    std::uint64_t seed = 0;

    void validate() const {
        if (group_size < 1) throw std::invalid_argument("group_size must be >= 1");
        if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) {
            throw std::invalid_argument("clip_epsilon must be in (0,1)");
        }
        if (kl_beta < 0.0) throw std::invalid_argument("kl_beta must be >= 0");
        if (prompt_batch_size < 1) throw std::invalid_argument("prompt_batch_size must be >= 1");
        if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
        if (max_rollout_tokens < 0) {
            throw std::invalid_argument("max_rollout_tokens must be >= 0");
        }
    }
};

// ---------------------------------------------------------------------------
// Surrogate pieces
// ---------------------------------------------------------------------------

// pi_new / pi_old for one token, computed in log space.
inline double token_ratio(double logp_new, double logp_old) {
    return std::exp(logp_new - logp_old);
}

// min(r*A, clip(r, 1-eps, 1+eps)*A); clipped reports whether the clip branch
// was strictly smaller (the flat region of the surrogate).
inline std::pair<double, bool> clipped_term(double ratio, double advantage, double epsilon) {
    if (!(ratio > 0.0)) throw std::invalid_argument("policy ratio must be positive");
    const double clipped_ratio = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
    const double raw = ratio * advantage;
    const double clipped = clipped_ratio * advantage;
    if (clipped < raw) return {clipped, true};
    return {raw, false};
}

// Nonnegative per-token KL estimator: rho - log(rho) - 1 with
// rho = pi_ref / pi_new. Zero iff the policies coincide on the token.
inline double kl_token(double logp_new, double logp_ref) {
    const double rho = std::exp(logp_ref - logp_new);
    return rho - (logp_ref - logp_new) - 1.0;
}

struct TokenTerm {
    double ratio = 1.0;
    bool clipped = false;
    double contribution = 0.0;  // the min/clip value for this token
};

struct SurrogateTerms {
    std::vector<std::vector<TokenTerm>> tokens;  // [rollout][token]
    double surrogate = 0.0;                      // (1/G) sum_i (1/|o_i|) sum_t contribution
    double kl = 0.0;                             // mean over all tokens in the group
    double objective = 0.0;                      // surrogate - beta * kl
};

namespace grpo_detail {

// Context of token t: prompt followed by the first t output tokens.
inline std::span<const int> context_of(const Rollout& r, std::vector<int>& scratch,
                                       std::size_t t) {
    scratch.assign(r.prompt_tokens.begin(), r.prompt_tokens.end());
    scratch.insert(scratch.end(), r.output_tokens.begin(),
                   r.output_tokens.begin() + static_cast<std::ptrdiff_t>(t));
    return scratch;
}

}  // namespace grpo_detail

// ---------------------------------------------------------------------------
// Objective and gradient
// ---------------------------------------------------------------------------

// Group surrogate with token-level ratios; the scalar group advantage is
// broadcast to every token of its rollout. Zero-length rollouts contribute
// nothing. KL is averaged over all tokens and subtracted once.
inline SurrogateTerms grpo_objective(std::span<const Rollout> rollouts,
                                     const AdvantageVector& advantages,
                                     const PolicyParams& params, const PolicyParams& params_old,
                                     const PolicyParams& params_ref, const GrpoConfig& cfg) {
    if (rollouts.size() != advantages.values.size()) {
        throw std::invalid_argument("rollout/advantage count mismatch");
    }
    if (rollouts.empty()) throw std::invalid_argument("empty rollout group");
    const double temperature = params.cfg.temperature;

    SurrogateTerms terms;
    terms.tokens.resize(rollouts.size());
    double kl_sum = 0.0;
    std::size_t token_count = 0;
    std::vector<int> scratch;

    for (std::size_t i = 0; i < rollouts.size(); ++i) {
        const Rollout& r = rollouts[i];
        const double advantage = advantages.values[i];
        double inner = 0.0;
        terms.tokens[i].reserve(r.output_tokens.size());
        for (std::size_t t = 0; t < r.output_tokens.size(); ++t) {
            const auto context = grpo_detail::context_of(r, scratch, t);
            const int token = r.output_tokens[t];
            const double lp_new = logprob_token(params, context, token, temperature);
            const double lp_old = logprob_token(params_old, context, token, temperature);
            const double lp_ref = logprob_token(params_ref, context, token, temperature);

            TokenTerm term;
            term.ratio = token_ratio(lp_new, lp_old);
            auto [value, clipped] = clipped_term(term.ratio, advantage, cfg.clip_epsilon);
            term.contribution = value;
            term.clipped = clipped;
            terms.tokens[i].push_back(term);

            inner += value;
            kl_sum += kl_token(lp_new, lp_ref);
            ++token_count;
        }
        if (!r.output_tokens.empty()) {
            terms.surrogate += inner / static_cast<double>(r.output_tokens.size());
        }
    }
    terms.surrogate /= static_cast<double>(rollouts.size());
    terms.kl = token_count > 0 ? kl_sum / static_cast<double>(token_count) : 0.0;
    terms.objective = terms.surrogate - cfg.kl_beta * terms.kl;
    return terms;
}

// Exact gradient of the group objective with respect to the current policy.
// Tokens on the clipped branch contribute nothing through the surrogate;
// the KL term differentiates to (1 - rho) * grad(logpi) per token.
inline std::vector<double> grpo_gradient(std::span<const Rollout> rollouts,
                                         const AdvantageVector& advantages,
                                         const PolicyParams& params,
                                         const PolicyParams& params_old,
                                         const PolicyParams& params_ref, const GrpoConfig& cfg) {
    if (rollouts.size() != advantages.values.size()) {
        throw std::invalid_argument("rollout/advantage count mismatch");
    }
    if (rollouts.empty()) throw std::invalid_argument("empty rollout group");
    const double temperature = params.cfg.temperature;
    const double group_inv = 1.0 / static_cast<double>(rollouts.size());

    std::size_t token_count = 0;
    for (const Rollout& r : rollouts) token_count += r.output_tokens.size();

    std::vector<double> grad(params.theta.size(), 0.0);
    std::vector<int> scratch;
    for (std::size_t i = 0; i < rollouts.size(); ++i) {
        const Rollout& r = rollouts[i];
        if (r.output_tokens.empty()) continue;
        const double advantage = advantages.values[i];
        const double len_inv = 1.0 / static_cast<double>(r.output_tokens.size());
        for (std::size_t t = 0; t < r.output_tokens.size(); ++t) {
            const auto context = grpo_detail::context_of(r, scratch, t);
            const int token = r.output_tokens[t];
            const double lp_new = logprob_token(params, context, token, temperature);
            const double lp_old = logprob_token(params_old, context, token, temperature);

            double coeff = 0.0;
            const double ratio = token_ratio(lp_new, lp_old);
            auto [value, clipped] = clipped_term(ratio, advantage, cfg.clip_epsilon);
            (void)value;
            if (!clipped) {
                // d(r*A)/dtheta = A * r * grad(logpi)
                coeff += group_inv * len_inv * advantage * ratio;
            }
            if (cfg.kl_beta > 0.0 && token_count > 0) {
                const double lp_ref = logprob_token(params_ref, context, token, temperature);
                const double rho = std::exp(lp_ref - lp_new);
                coeff -= cfg.kl_beta * (1.0 - rho) / static_cast<double>(token_count);
            }
            if (coeff != 0.0) {
                accumulate_grad_logprob(params, context, token, temperature, coeff, grad);
            }
        }
    }
    return grad;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

// Mutable state threaded through training steps.
struct TrainState {
    PolicyParams params;      // current policy
    PolicyParams params_old;  // behavior policy the rollouts were sampled from
    PolicyParams params_ref;  // frozen at run start for the KL penalty
    AdamState adam;
    AdamConfig adam_cfg;
    std::int64_t step = 0;
};

inline TrainState make_train_state(PolicyParams initial, AdamConfig adam_cfg = {}) {
    TrainState st;
    st.params_old = initial;
    st.params_ref = initial;
    st.params = std::move(initial);
    st.adam_cfg = adam_cfg;
    return st;
}

// One joint update over a mixed-task prompt batch: sample groups from the
// behavior policy, score them, normalize advantages, and take one Adam step
// on the batch-mean gradient. A judge failure aborts before the update.
inline StepMetrics train_step(std::span<const Question> batch, TrainState& state, Judge& judge,
                              const GrpoConfig& grpo_cfg, const RewardConfig& reward_cfg,
                              const Vocab& vocab) {
    if (batch.empty()) throw std::invalid_argument("train_step on empty batch");
    grpo_cfg.validate();
    reward_cfg.validate();
    const auto started = std::chrono::steady_clock::now();

    if (grpo_cfg.old_policy_refresh == RefreshMode::PerStep) {
        state.params_old = snapshot(state.params);
    }
    PolicyParams sampler = snapshot(state.params_old);
    if (grpo_cfg.max_rollout_tokens > 0) sampler.cfg.max_len = grpo_cfg.max_rollout_tokens;

    std::vector<double> grad_sum(state.params.theta.size(), 0.0);
    StepMetrics metrics;
    metrics.step = state.step;
    std::map<Task, double> task_reward_sum;
    std::map<Task, int> task_question_count;
    double reward_sum = 0.0, kl_sum = 0.0, objective_sum = 0.0, length_sum = 0.0;
    std::size_t rollout_count = 0, truncated_count = 0;

    const std::uint64_t step_seed =
        mix_seed(grpo_cfg.seed, static_cast<std::uint64_t>(state.step), fnv1a64("train_step"));

    for (const Question& q : batch) {
        const std::vector<int> prompt = vocab.encode_prompt(q.prompt_text);
        const std::vector<Rollout> rollouts =
            sample_group(sampler, prompt, grpo_cfg.group_size, step_seed, q.question_id);
        const GroupRewards rewards = score_group(rollouts, q, judge, reward_cfg, vocab);
        const AdvantageVector advantages =
            normalize_advantages(rewards, reward_cfg.sigma_epsilon);
        const SurrogateTerms terms = grpo_objective(rollouts, advantages, state.params,
                                                    state.params_old, state.params_ref, grpo_cfg);
        const std::vector<double> grad = grpo_gradient(
            rollouts, advantages, state.params, state.params_old, state.params_ref, grpo_cfg);
        for (std::size_t i = 0; i < grad.size(); ++i) grad_sum[i] += grad[i];

        double group_mean_reward = 0.0;
        for (double r : rewards.rewards) group_mean_reward += r;
        group_mean_reward /= static_cast<double>(rewards.rewards.size());
        reward_sum += group_mean_reward;
        task_reward_sum[q.task.task] += group_mean_reward;
        task_question_count[q.task.task] += 1;
        kl_sum += terms.kl;
        objective_sum += terms.objective;
        for (const Rollout& r : rollouts) {
            length_sum += static_cast<double>(r.output_tokens.size());
            if (r.truncated) ++truncated_count;
            ++rollout_count;
        }
    }

    const double batch_inv = 1.0 / static_cast<double>(batch.size());
    for (double& g : grad_sum) g *= batch_inv;  // mean, so lr is batch-size-invariant
    apply_update(state.params, grad_sum, state.adam, state.adam_cfg);
    state.step += 1;

    metrics.mean_reward = reward_sum * batch_inv;
    for (const auto& [task, sum] : task_reward_sum) {
        metrics.per_task_reward[task] = sum / task_question_count[task];
    }
    metrics.mean_response_length = length_sum / static_cast<double>(rollout_count);
    metrics.overlength_clip_ratio =
        static_cast<double>(truncated_count) / static_cast<double>(rollout_count);
    metrics.mean_kl = kl_sum * batch_inv;
    metrics.objective = objective_sum * batch_inv;
    metrics.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - started)
                          .count();
    return metrics;
}

struct TrainResult {
    PolicyParams params;
    std::vector<StepMetrics> metrics;
};

// Invoked after every completed step; used for interval validation.
using StepCallback = std::function<void(const TrainState&, const StepMetrics&)>;

// Full run: epochs x ceil(N / batch) joint steps over shuffled mixed-task
// questions. The reference policy stays frozen at the initial parameters;
// a checkpoint is written at each epoch end when a directory is given.
inline TrainResult train(const std::vector<Question>& questions, PolicyParams initial,
                         Judge& judge, const GrpoConfig& grpo_cfg,
                         const RewardConfig& reward_cfg, const Vocab& vocab,
                         AdamConfig adam_cfg = {}, MetricsWriter* writer = nullptr,
                         const std::filesystem::path& checkpoint_dir = {},
                         const StepCallback& on_step = {}) {
    if (questions.empty()) throw std::invalid_argument("train on empty dataset");
    grpo_cfg.validate();

    TrainState state = make_train_state(std::move(initial), adam_cfg);
    TrainResult result;
    Rng shuffle_rng(mix_seed(grpo_cfg.seed, fnv1a64("epoch_shuffle")));

    std::vector<std::size_t> order(questions.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < grpo_cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        if (grpo_cfg.old_policy_refresh == RefreshMode::PerEpoch) {
            state.params_old = snapshot(state.params);
        }
        for (std::size_t begin = 0; begin < order.size();
             begin += static_cast<std::size_t>(grpo_cfg.prompt_batch_size)) {
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(grpo_cfg.prompt_batch_size));
            std::vector<Question> batch;
            batch.reserve(end - begin);
            for (std::size_t k = begin; k < end; ++k) batch.push_back(questions[order[k]]);
            StepMetrics metrics =
                train_step(batch, state, judge, grpo_cfg, reward_cfg, vocab);
            if (writer) writer->record_step(metrics);
            if (on_step) on_step(state, metrics);
            result.metrics.push_back(std::move(metrics));
        }
        if (!checkpoint_dir.empty()) {
            std::filesystem::create_directories(checkpoint_dir);
            Checkpoint ckpt{state.params.cfg, state.params.theta, state.adam, state.step};
            save_checkpoint(checkpoint_dir / ("checkpoint_epoch_" + std::to_string(epoch + 1) +
                                              ".json"),
                            ckpt);
        }
    }
    result.params = std::move(state.params);
    return result;
}

}  // namespace driverl
