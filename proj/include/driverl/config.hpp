// Copyright 2026 the driverl authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "driverl/dataset.hpp"
#include "driverl/grpo.hpp"
#include "driverl/http_judge.hpp"
#include "driverl/policy.hpp"
#include "driverl/reward.hpp"

namespace driverl {

struct JudgeSelection {
    std::string kind = "mock";  // "mock" | "http"
    HttpJudgeConfig http;
};

struct DatasetOptions {
    double train_lo = 25.0;
    double train_hi = 45.0;
    double hard_lo = 10.0;
    double hard_hi = 31.0;
    double balance_alpha = 0.5;
    std::uint64_t seed = 0;
    std::vector<std::string> exclusions;
};

// One archived, replayable run. Sections mirror the module boundaries;
// any key absent keeps its default, unknown keys are rejected.
struct RunConfig {
    PolicyConfig policy;
    AdamConfig optimizer;  // lives in the [policy] section
    GrpoConfig grpo;
    RewardConfig reward;
    JudgeSelection judge;
    DatasetOptions dataset;
};

namespace config_detail {

inline void reject_unknown(const json& section, const std::set<std::string>& known,
                           const std::string& name) {
    for (const auto& [key, _] : section.items()) {
        if (!known.count(key)) {
            throw std::runtime_error("unknown config key '" + name + "." + key + "'");
        }
    }
}

template <typename T>
void read_into(const json& section, const char* key, T& target) {
    if (section.contains(key)) target = section.at(key).get<T>();
}

}  // namespace config_detail

inline void apply_run_config_json(RunConfig& cfg, const json& root) {
    using config_detail::read_into;
    using config_detail::reject_unknown;
    if (!root.is_object()) throw std::runtime_error("run config must be a JSON object");
    reject_unknown(root, {"policy", "grpo", "reward", "judge", "dataset"}, "top-level");

    if (root.contains("policy")) {
        const json& s = root.at("policy");
        reject_unknown(s,
                       {"vocab_size", "embed_dim", "hidden_dim", "context_window", "max_len",
                        "temperature", "init_scale", "seed", "learning_rate", "adam_beta1",
                        "adam_beta2", "adam_eps"},
                       "policy");
        read_into(s, "vocab_size", cfg.policy.vocab_size);
        read_into(s, "embed_dim", cfg.policy.embed_dim);
        read_into(s, "hidden_dim", cfg.policy.hidden_dim);
        read_into(s, "context_window", cfg.policy.context_window);
        read_into(s, "max_len", cfg.policy.max_len);
        read_into(s, "temperature", cfg.policy.temperature);
        read_into(s, "init_scale", cfg.policy.init_scale);
        read_into(s, "seed", cfg.policy.seed);
        read_into(s, "learning_rate", cfg.optimizer.learning_rate);
        read_into(s, "adam_beta1", cfg.optimizer.beta1);
        read_into(s, "adam_beta2", cfg.optimizer.beta2);
        read_into(s, "adam_eps", cfg.optimizer.eps);
    }
    if (root.contains("grpo")) {
        const json& s = root.at("grpo");
        reject_unknown(s,
                       {"group_size", "clip_epsilon", "kl_beta", "prompt_batch_size", "epochs",
                        "old_policy_refresh", "max_rollout_tokens", "seed"},
                       "grpo");
        read_into(s, "group_size", cfg.grpo.group_size);
        read_into(s, "clip_epsilon", cfg.grpo.clip_epsilon);
        read_into(s, "kl_beta", cfg.grpo.kl_beta);
        read_into(s, "prompt_batch_size", cfg.grpo.prompt_batch_size);
        read_into(s, "epochs", cfg.grpo.epochs);
        read_into(s, "max_rollout_tokens", cfg.grpo.max_rollout_tokens);
        read_into(s, "seed", cfg.grpo.seed);
        if (s.contains("old_policy_refresh")) {
            const std::string mode = s.at("old_policy_refresh").get<std::string>();
            if (mode == "per_step") {
                cfg.grpo.old_policy_refresh = RefreshMode::PerStep;
            } else if (mode == "per_epoch") {
                cfg.grpo.old_policy_refresh = RefreshMode::PerEpoch;
            } else {
                throw std::runtime_error("grpo.old_policy_refresh must be per_step or per_epoch");
            }
        }
    }
    if (root.contains("reward")) {
        const json& s = root.at("reward");
        reject_unknown(s, {"max_tokens", "repetition_ngram", "repetition_threshold",
                           "sigma_epsilon"},
                       "reward");
        read_into(s, "max_tokens", cfg.reward.max_tokens);
        read_into(s, "repetition_ngram", cfg.reward.repetition_ngram);
        read_into(s, "repetition_threshold", cfg.reward.repetition_threshold);
        read_into(s, "sigma_epsilon", cfg.reward.sigma_epsilon);
    }
    if (root.contains("judge")) {
        const json& s = root.at("judge");
        reject_unknown(s, {"kind", "url", "model", "temperature", "timeout_ms", "retries",
                           "concurrency", "templates_dir"},
                       "judge");
        read_into(s, "kind", cfg.judge.kind);
        if (cfg.judge.kind != "mock" && cfg.judge.kind != "http") {
            throw std::runtime_error("judge.kind must be mock or http");
        }
        read_into(s, "url", cfg.judge.http.url);
        read_into(s, "model", cfg.judge.http.model);
        read_into(s, "temperature", cfg.judge.http.temperature);
        read_into(s, "timeout_ms", cfg.judge.http.timeout_ms);
        read_into(s, "retries", cfg.judge.http.retries);
        read_into(s, "concurrency", cfg.judge.http.concurrency);
        read_into(s, "templates_dir", cfg.judge.http.templates_dir);
    }
    if (root.contains("dataset")) {
        const json& s = root.at("dataset");
        reject_unknown(s, {"train_range", "hard_range", "balance_alpha", "seed", "exclusions"},
                       "dataset");
        if (s.contains("train_range")) {
            const auto range = s.at("train_range").get<std::vector<double>>();
            if (range.size() != 2) throw std::runtime_error("dataset.train_range needs [lo, hi]");
            cfg.dataset.train_lo = range[0];
            cfg.dataset.train_hi = range[1];
        }
        if (s.contains("hard_range")) {
            const auto range = s.at("hard_range").get<std::vector<double>>();
            if (range.size() != 2) throw std::runtime_error("dataset.hard_range needs [lo, hi]");
            cfg.dataset.hard_lo = range[0];
            cfg.dataset.hard_hi = range[1];
        }
        read_into(s, "balance_alpha", cfg.dataset.balance_alpha);
        read_into(s, "seed", cfg.dataset.seed);
        read_into(s, "exclusions", cfg.dataset.exclusions);
    }
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    json root;
    try {
        in >> root;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config " + path.string() + " is not valid JSON: " + e.what());
    }
    RunConfig cfg;
    apply_run_config_json(cfg, root);
    cfg.policy.validate();
    cfg.grpo.validate();
    cfg.reward.validate();
    return cfg;
}

}  // namespace driverl
