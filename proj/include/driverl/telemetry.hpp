// Copyright 2026 the driverl authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "driverl/judge.hpp"
#include "driverl/policy.hpp"
#include "driverl/types.hpp"

namespace driverl {

// ---------------------------------------------------------------------------
// Step metrics
// ---------------------------------------------------------------------------

// One training step's telemetry row.
struct StepMetrics {
    std::int64_t step = 0;
    double mean_reward = 0.0;
    std::map<Task, double> per_task_reward;
    double mean_response_length = 0.0;
    double overlength_clip_ratio = 0.0;  // fraction of rollouts truncated at max length
    double mean_kl = 0.0;
    double objective = 0.0;
    std::int64_t wall_ms = 0;
};

inline json step_metrics_to_json(const StepMetrics& m) {
    json per_task = json::object();
    for (const auto& [task, reward] : m.per_task_reward) per_task[to_string(task)] = reward;
    return json{{"step", m.step},
                {"mean_reward", m.mean_reward},
                {"per_task_reward", per_task},
                {"mean_response_length", m.mean_response_length},
                {"overlength_clip_ratio", m.overlength_clip_ratio},
                {"mean_kl", m.mean_kl},
                {"objective", m.objective},
                {"wall_ms", m.wall_ms}};
}

inline StepMetrics step_metrics_from_json(const json& j) {
    StepMetrics m;
    m.step = j.at("step").get<std::int64_t>();
    m.mean_reward = j.at("mean_reward").get<double>();
    for (const auto& [key, value] : j.at("per_task_reward").items()) {
        auto task = parse_task(key);
        if (!task) throw std::runtime_error("unknown task key in metrics: " + key);
        m.per_task_reward[*task] = value.get<double>();
    }
    m.mean_response_length = j.at("mean_response_length").get<double>();
    m.overlength_clip_ratio = j.at("overlength_clip_ratio").get<double>();
    m.mean_kl = j.at("mean_kl").get<double>();
    m.objective = j.at("objective").get<double>();
    m.wall_ms = j.at("wall_ms").get<std::int64_t>();
    return m;
}

// Fraction of rollouts truncated at the maximum rollout length.
inline double overlength_ratio(std::span<const Rollout> rollouts) {
    if (rollouts.empty()) throw std::invalid_argument("overlength_ratio of empty rollout list");
    std::size_t truncated = 0;
    for (const Rollout& r : rollouts) {
        if (r.truncated) ++truncated;
    }
    return static_cast<double>(truncated) / static_cast<double>(rollouts.size());
}

// Append-only JSONL writer; steps must be strictly increasing, also across
// reopened files.
class MetricsWriter {
   public:
    explicit MetricsWriter(const std::filesystem::path& path) : path_(path) {
        if (std::filesystem::exists(path)) {
            for (const StepMetrics& m : read_log(path)) last_step_ = m.step;
        }
        out_.open(path, std::ios::app);
        if (!out_) throw std::runtime_error("cannot open metrics log " + path.string());
    }

    void record_step(const StepMetrics& m) {
        if (last_step_ && m.step <= *last_step_) {
            throw std::runtime_error("out-of-order metrics step " + std::to_string(m.step) +
                                     " after " + std::to_string(*last_step_));
        }
        out_ << step_metrics_to_json(m).dump() << '\n';
        out_.flush();
        if (!out_) throw std::runtime_error("metrics write failed: " + path_.string());
        last_step_ = m.step;
    }

    static std::vector<StepMetrics> read_log(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open metrics log " + path.string());
        std::vector<StepMetrics> rows;
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                rows.push_back(step_metrics_from_json(json::parse(line)));
            } catch (const std::exception& e) {
                throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                         ": corrupt metrics line: " + e.what());
            }
        }
        return rows;
    }

   private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::optional<std::int64_t> last_step_;
};

// ---------------------------------------------------------------------------
// Checkpoint evaluation
// ---------------------------------------------------------------------------

struct EvalReport {
    std::string split_name;
    std::map<Task, double> per_task_mean;  // each in [0,100]
    std::map<Task, int> per_task_count;
    std::string judge_id;
    std::uint64_t seed = 0;
};

inline json eval_report_to_json(const EvalReport& r) {
    json per_task = json::object();
    json counts = json::object();
    for (const auto& [task, mean] : r.per_task_mean) per_task[to_string(task)] = mean;
    for (const auto& [task, count] : r.per_task_count) counts[to_string(task)] = count;
    return json{{"split", r.split_name},
                {"per_task_mean", per_task},
                {"per_task_count", counts},
                {"judge", r.judge_id},
                {"seed", r.seed}};
}

// Decodes one response per question and judges it; per-task means. Decoding
// is greedy by default; a positive sample_temperature switches to seeded
// sampled decoding at that temperature. Deterministic for a deterministic
// judge either way.
inline EvalReport evaluate_split(std::span<const Question> split, const PolicyParams& params,
                                 Judge& judge, const Vocab& vocab, std::string split_name,
                                 std::uint64_t seed, double sample_temperature = 0.0) {
    if (split.empty()) throw std::invalid_argument("evaluate_split on empty split");
    PolicyParams sampler = params;
    if (sample_temperature > 0.0) sampler.cfg.temperature = sample_temperature;
    EvalReport report;
    report.split_name = std::move(split_name);
    report.judge_id = judge.id();
    report.seed = seed;
    std::map<Task, double> sums;
    for (const Question& q : split) {
        const std::vector<int> prompt = vocab.encode_prompt(q.prompt_text);
        const Rollout rollout =
            sample_temperature > 0.0
                ? sample_rollout(sampler, prompt,
                                 mix_seed(seed, fnv1a64(q.question_id), fnv1a64("eval")))
                : greedy_decode(params, prompt);
        JudgeRequest req;
        req.task = q.task;
        req.question = q.prompt_text;
        req.reference_answer = q.reference_answer;
        req.response = vocab.decode(rollout.output_tokens);
        double score = 0.0;
        try {
            score = judge.score(req);
        } catch (const std::exception& e) {
            throw std::runtime_error("judge failed on question '" + q.question_id +
                                     "': " + e.what());
        }
        sums[q.task.task] += score;
        report.per_task_count[q.task.task] += 1;
    }
    for (const auto& [task, sum] : sums) {
        report.per_task_mean[task] = sum / report.per_task_count[task];
    }
    return report;
}

// ---------------------------------------------------------------------------
// Agreement statistics
// ---------------------------------------------------------------------------

inline double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("pearson: need at least 2 points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw std::runtime_error("undefined correlation: zero variance input");
    }
    return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------
// Report generation
// ---------------------------------------------------------------------------

namespace telemetry_detail {

inline std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Series {
    std::string name;
    std::vector<double> values;
};

}  // namespace telemetry_detail

// Emits one CSV per training-dynamics panel plus a plain-text summary with
// first/last/min/max per series. Rendering is left to external tools.
inline void write_report(const std::vector<StepMetrics>& rows,
                         const std::filesystem::path& out_dir) {
    using telemetry_detail::format_value;
    if (rows.empty()) throw std::runtime_error("metrics log is empty; nothing to report");
    std::filesystem::create_directories(out_dir);

    auto open = [&](const std::string& name) {
        std::ofstream out(out_dir / name);
        if (!out) throw std::runtime_error("cannot write " + (out_dir / name).string());
        return out;
    };

    {
        auto out = open("mean_reward.csv");
        out << "step,mean_reward\n";
        for (const auto& m : rows) out << m.step << ',' << format_value(m.mean_reward) << '\n';
    }
    {
        auto out = open("per_task_reward.csv");
        out << "step";
        for (Task t : kAllTasks) out << ',' << to_string(t);
        out << '\n';
        for (const auto& m : rows) {
            out << m.step;
            for (Task t : kAllTasks) {
                out << ',';
                auto it = m.per_task_reward.find(t);
                if (it != m.per_task_reward.end()) out << format_value(it->second);
            }
            out << '\n';
        }
    }
    {
        auto out = open("mean_response_length.csv");
        out << "step,mean_response_length\n";
        for (const auto& m : rows) {
            out << m.step << ',' << format_value(m.mean_response_length) << '\n';
        }
    }
    {
        auto out = open("overlength_clip_ratio.csv");
        out << "step,overlength_clip_ratio\n";
        for (const auto& m : rows) {
            out << m.step << ',' << format_value(m.overlength_clip_ratio) << '\n';
        }
    }

    std::vector<telemetry_detail::Series> series{
        {"mean_reward", {}}, {"mean_response_length", {}}, {"overlength_clip_ratio", {}},
        {"mean_kl", {}},     {"objective", {}},
    };
    for (const auto& m : rows) {
        series[0].values.push_back(m.mean_reward);
        series[1].values.push_back(m.mean_response_length);
        series[2].values.push_back(m.overlength_clip_ratio);
        series[3].values.push_back(m.mean_kl);
        series[4].values.push_back(m.objective);
    }
    auto out = open("summary.txt");
    out << "steps " << rows.size() << " (first " << rows.front().step << ", last "
        << rows.back().step << ")\n";
    for (const auto& s : series) {
        double lo = s.values.front(), hi = s.values.front();
        for (double v : s.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        out << s.name << " first=" << format_value(s.values.front())
            << " last=" << format_value(s.values.back()) << " min=" << format_value(lo)
            << " max=" << format_value(hi) << '\n';
    }
}

}  // namespace driverl
