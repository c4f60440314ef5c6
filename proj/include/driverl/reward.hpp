// Copyright 2026 the driverl authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "driverl/judge.hpp"
#include "driverl/policy.hpp"
#include "driverl/types.hpp"

namespace driverl {

struct RewardConfig {
    int max_tokens = 4096;              // responses beyond this are zero-rewarded
    int repetition_ngram = 8;
    double repetition_threshold = 0.5;  // ratio at or above this is zero-rewarded
    double sigma_epsilon = 1e-6;

    void validate() const {
        if (max_tokens < 1) throw std::invalid_argument("max_tokens must be >= 1");
        if (repetition_ngram < 2) throw std::invalid_argument("repetition_ngram must be >= 2");
        if (repetition_threshold < 0.0 || repetition_threshold > 1.0) {
            throw std::invalid_argument("repetition_threshold must be in [0,1]");
        }
        if (!(sigma_epsilon > 0.0)) throw std::invalid_argument("sigma_epsilon must be > 0");
    }
};

// ---------------------------------------------------------------------------
// Stage (i): rule gate
// ---------------------------------------------------------------------------

// Fraction of n-gram occurrences that repeat an earlier one:
// 1 - distinct/total. Sequences shorter than n score 0.
inline double repetition_ratio(std::span<const int> tokens, int n) {
    if (n < 2) throw std::invalid_argument("repetition n-gram size must be >= 2");
    const std::size_t len = tokens.size();
    if (len < static_cast<std::size_t>(n)) return 0.0;
    const std::size_t total = len - n + 1;
    std::map<std::vector<int>, bool> seen;
    std::size_t distinct = 0;
    std::vector<int> gram(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < total; ++i) {
        gram.assign(tokens.begin() + i, tokens.begin() + i + n);
        if (seen.emplace(gram, true).second) ++distinct;
    }
    return 1.0 - static_cast<double>(distinct) / static_cast<double>(total);
}

enum class GateReason { Overlength, Repetition };

struct GateResult {
    bool passed = true;
    GateReason reason = GateReason::Overlength;
};

constexpr const char* to_string(GateReason r) {
    return r == GateReason::Overlength ? "overlength" : "repetition";
}

// Length check first, then repetition; gated responses never reach the judge.
inline GateResult rule_gate(std::span<const int> response_tokens, const RewardConfig& cfg) {
    if (static_cast<int>(response_tokens.size()) > cfg.max_tokens) {
        return GateResult{false, GateReason::Overlength};
    }
    if (repetition_ratio(response_tokens, cfg.repetition_ngram) >= cfg.repetition_threshold) {
        return GateResult{false, GateReason::Repetition};
    }
    return GateResult{true, GateReason::Overlength};
}

// ---------------------------------------------------------------------------
// Group rewards and advantages
// ---------------------------------------------------------------------------

struct GroupRewards {
    std::vector<double> rewards;  // each in [0,100]
    std::vector<bool> gated;      // gated[i] implies rewards[i] == 0
};

struct AdvantageVector {
    std::vector<double> values;
};

// (R_i - mean) / population-std; a group whose std is within sigma_epsilon of
// zero yields all-zero advantages (skip-update semantics). The scalar is later
// broadcast to every token of its rollout.
inline AdvantageVector normalize_advantages(const GroupRewards& group, double sigma_epsilon) {
    const std::size_t n = group.rewards.size();
    if (n == 0) throw std::invalid_argument("empty reward group");
    double mean = 0.0;
    for (double r : group.rewards) mean += r;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double r : group.rewards) var += (r - mean) * (r - mean);
    var /= static_cast<double>(n);
    const double sigma = std::sqrt(var);

    AdvantageVector adv;
    adv.values.assign(n, 0.0);
    if (sigma > sigma_epsilon) {
        for (std::size_t i = 0; i < n; ++i) {
            adv.values[i] = (group.rewards[i] - mean) / sigma;
        }
    }
    return adv;
}

// ---------------------------------------------------------------------------
// Two-stage scoring of a rollout group
// ---------------------------------------------------------------------------

namespace reward_detail {

inline void check_score_range(double score) {
    if (!(score >= 0.0 && score <= 100.0)) {
        throw std::runtime_error("judge returned score outside [0,100]: " +
                                 std::to_string(score));
    }
}

}  // namespace reward_detail

// Rule gate first; only surviving rollouts consult the judge. Gated rollouts
// keep reward 0 and still participate in the group statistics. A judge error
// fails the whole group. When the judge permits it, requests go out
// concurrently; results are reassembled in rollout order either way.
inline GroupRewards score_group(std::span<const Rollout> rollouts, const Question& question,
                                Judge& judge, const RewardConfig& cfg, const Vocab& vocab) {
    if (rollouts.empty()) throw std::invalid_argument("score_group needs at least one rollout");
    cfg.validate();
    GroupRewards out;
    out.rewards.assign(rollouts.size(), 0.0);
    out.gated.assign(rollouts.size(), false);

    std::vector<std::size_t> pending;
    std::vector<JudgeRequest> requests;
    for (std::size_t i = 0; i < rollouts.size(); ++i) {
        const GateResult gate = rule_gate(rollouts[i].output_tokens, cfg);
        if (!gate.passed) {
            out.gated[i] = true;
            continue;
        }
        JudgeRequest req;
        req.task = question.task;
        req.question = question.prompt_text;
        req.reference_answer = question.reference_answer;
        req.response = vocab.decode(rollouts[i].output_tokens);
        pending.push_back(i);
        requests.push_back(std::move(req));
    }

    const int workers =
        std::min<int>(judge.max_concurrency(), static_cast<int>(pending.size()));
    if (workers <= 1) {
        for (std::size_t k = 0; k < pending.size(); ++k) {
            const double score = judge.score(requests[k]);
            reward_detail::check_score_range(score);
            out.rewards[pending[k]] = score;
        }
        return out;
    }

    std::vector<double> scores(pending.size(), 0.0);
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= pending.size()) return;
            try {
                scores[k] = judge.score(requests[k]);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
    for (std::size_t k = 0; k < pending.size(); ++k) {
        reward_detail::check_score_range(scores[k]);
        out.rewards[pending[k]] = scores[k];
    }
    return out;
}

}  // namespace driverl
