// Copyright 2026 the driverl authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "driverl/types.hpp"

namespace driverl {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Judge interface
// ---------------------------------------------------------------------------

struct JudgeRequest {
    TaskKind task;
    std::string question;
    std::string reference_answer;  // may be empty for open-ended items
    std::string response;          // may be empty when a rollout stops immediately
};

// Maps (task, question, reference, response) to a quality score in [0,100].
class Judge {
   public:
    virtual ~Judge() = default;
    virtual double score(const JudgeRequest& req) = 0;
    virtual std::string id() const = 0;

    // Callers may issue up to this many score() calls concurrently; backends
    // returning > 1 must make score() thread-safe.
    virtual int max_concurrency() const { return 1; }
};

// ---------------------------------------------------------------------------
// Mock judge: token-level F1 against the reference
// ---------------------------------------------------------------------------

inline std::vector<std::string> split_whitespace(std::string_view text) {
    std::vector<std::string> words;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) words.emplace_back(text.substr(start, i - start));
    }
    return words;
}

// F1 over token multisets; symmetric by construction.
inline double token_f1(std::string_view a, std::string_view b) {
    const std::vector<std::string> ta = split_whitespace(a);
    const std::vector<std::string> tb = split_whitespace(b);
    if (ta.empty() && tb.empty()) return 1.0;
    if (ta.empty() || tb.empty()) return 0.0;
    std::map<std::string, int> counts;
    for (const auto& w : ta) ++counts[w];
    int overlap = 0;
    for (const auto& w : tb) {
        auto it = counts.find(w);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    if (overlap == 0) return 0.0;
    const double precision = static_cast<double>(overlap) / static_cast<double>(tb.size());
    const double recall = static_cast<double>(overlap) / static_cast<double>(ta.size());
    return 2.0 * precision * recall / (precision + recall);
}

// Deterministic test double: round(100 * token F1 vs the reference).
class MockJudge : public Judge {
   public:
    double score(const JudgeRequest& req) override {
        return std::round(100.0 * token_f1(req.reference_answer, req.response));
    }
    std::string id() const override { return "mock"; }
};

// ---------------------------------------------------------------------------
// Rubric routing
// ---------------------------------------------------------------------------

struct RenderedRubric {
    std::string template_id;
    std::string text;
    bool used_fallback = false;
};

namespace rubric_detail {

inline std::string replace_all(std::string text, std::string_view needle, std::string_view value) {
    std::size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        text.replace(pos, needle.size(), value);
        pos += value.size();
    }
    return text;
}

// Five scoring criteria shared by the reasoning-stage rubrics.
constexpr const char* kCriteria =
    "correctness, behavioral understanding, contextual relevance, logic and reasoning "
    "and clarity of reasoning";

inline std::map<std::string, std::string> builtin_templates() {
    auto body = [](std::string_view intro, std::string_view guidance) {
        std::string t;
        t += intro;
        t += "\n";
        t += guidance;
        t += "\nReply with a single integer between 0 and 100 and nothing else.\n"
             "\nQuestion:\n{question}\n"
             "\nReference answer:\n{reference}\n"
             "\nCandidate answer:\n{response}\n";
        return t;
    };
    std::map<std::string, std::string> t;
    t["perception_mcq"] = body(
        "You are grading a multiple-choice answer about what is visible in a driving scene.",
        "Full credit requires picking the same option as the reference; partial credit only "
        "when the stated option letter is absent but the described content matches.");
    t["perception_vqa"] = body(
        "You are grading a free-form answer about objects and signals visible in a driving scene.",
        "Score how completely and precisely the candidate covers the elements named by the "
        "reference, penalizing invented objects.");
    t["prediction_vqa"] = body(
        "You are grading a free-form answer about what nearby agents will do next.",
        "Score agreement with the reference on each agent's future motion and intent, "
        "penalizing contradictions more than omissions.");
    t["prediction_yesno"] = body(
        "You are grading a yes/no judgment about an agent's future motion.",
        "The verdict must agree with the reference; a correct verdict with sound "
        "justification earns full credit, a wrong verdict earns at most a low score.");
    t["planning_vqa"] = body(
        "You are grading a free-form answer proposing the vehicle's near-term maneuver.",
        std::string("Weigh ") + kCriteria +
            " when comparing the proposed maneuver against the reference.");
    t["behavior_mcq"] = body(
        "You are grading a multiple-choice answer selecting the ego vehicle's driving behavior.",
        std::string("Weigh ") + kCriteria +
            " when deciding how close the chosen behavior is to the reference.");
    t["generic"] = body(
        "You are grading an answer to a driving-scene question.",
        std::string("Weigh ") + kCriteria + " against the reference answer.");
    return t;
}

}  // namespace rubric_detail

// Prompt templates keyed by id, with {question}/{reference}/{response}
// placeholders. Ships with built-in texts; a directory of .txt files
// (id = file stem) can replace them.
class RubricSet {
   public:
    static RubricSet builtin() {
        RubricSet r;
        r.templates_ = rubric_detail::builtin_templates();
        return r;
    }

    static RubricSet load_dir(const std::filesystem::path& dir) {
        RubricSet r;
        if (!std::filesystem::is_directory(dir)) {
            throw std::runtime_error("rubric template directory not found: " + dir.string());
        }
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
            std::ifstream in(entry.path());
            std::stringstream ss;
            ss << in.rdbuf();
            r.templates_[entry.path().stem().string()] = ss.str();
        }
        if (!r.templates_.count("generic")) {
            throw std::runtime_error("rubric directory lacks generic.txt: " + dir.string());
        }
        return r;
    }

    const std::map<std::string, std::string>& templates() const { return templates_; }

    // (task, style) -> template id; unsupported pairs fall back to "generic".
    static std::pair<std::string, bool> template_id_for(Task task, AnswerStyle style) {
        if (task == Task::Perception && style == AnswerStyle::MultipleChoice)
            return {"perception_mcq", false};
        if (task == Task::Perception && style == AnswerStyle::OpenEnded)
            return {"perception_vqa", false};
        if (task == Task::Prediction && style == AnswerStyle::OpenEnded)
            return {"prediction_vqa", false};
        if (task == Task::Prediction && style == AnswerStyle::YesNo)
            return {"prediction_yesno", false};
        if (task == Task::Planning && style == AnswerStyle::OpenEnded)
            return {"planning_vqa", false};
        if (task == Task::Behavior && style == AnswerStyle::MultipleChoice)
            return {"behavior_mcq", false};
        return {"generic", true};
    }

    RenderedRubric route(const TaskKind& kind, std::string_view question,
                         std::string_view reference, std::string_view response) const {
        auto [id, fallback] = template_id_for(kind.task, kind.style);
        auto it = templates_.find(id);
        if (it == templates_.end()) {
            it = templates_.find("generic");
            fallback = true;
            if (it == templates_.end()) throw std::runtime_error("no rubric template available");
        }
        std::string text = rubric_detail::replace_all(it->second, "{question}", question);
        text = rubric_detail::replace_all(text, "{reference}", reference);
        text = rubric_detail::replace_all(text, "{response}", response);
        return RenderedRubric{it->first, std::move(text), fallback};
    }

   private:
    std::map<std::string, std::string> templates_;
};

inline RenderedRubric route_rubric(const TaskKind& kind, std::string_view question,
                                   std::string_view reference, std::string_view response) {
    static const RubricSet rubrics = RubricSet::builtin();
    return rubrics.route(kind, question, reference, response);
}

// ---------------------------------------------------------------------------
// Score parsing
// ---------------------------------------------------------------------------

// First integer in [0,100] found in the text, scanning left to right.
inline std::optional<int> parse_score_text(std::string_view text) {
    std::size_t i = 0;
    while (i < text.size()) {
        if (std::isdigit(static_cast<unsigned char>(text[i]))) {
            std::size_t start = i;
            while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
            const std::string digits(text.substr(start, i - start));
            if (digits.size() <= 3) {
                const int value = std::stoi(digits);
                if (value >= 0 && value <= 100) return value;
            }
        } else {
            ++i;
        }
    }
    return std::nullopt;
}

namespace judge_detail {

// Collects string values in document order. With only_text_keys set, strings
// count only beneath a "content" or "text" key, so identifier fields like
// {"id": "reply-1"} cannot masquerade as scores.
inline void collect_text_fields(const json& j, bool only_text_keys,
                                std::vector<std::string>& out) {
    if (j.is_string()) {
        if (!only_text_keys) out.push_back(j.get<std::string>());
        return;
    }
    if (j.is_object()) {
        for (const auto& [key, value] : j.items()) {
            if (only_text_keys && (key == "content" || key == "text")) {
                collect_text_fields(value, false, out);
            } else {
                collect_text_fields(value, only_text_keys, out);
            }
        }
    } else if (j.is_array()) {
        for (const auto& value : j) collect_text_fields(value, only_text_keys, out);
    }
}

}  // namespace judge_detail

// The reply's text fields, scanned in document order for the first in-range
// integer. Replies without any content/text field fall back to every string.
inline std::optional<int> parse_score_json(const json& j) {
    std::vector<std::string> texts;
    judge_detail::collect_text_fields(j, true, texts);
    if (texts.empty()) judge_detail::collect_text_fields(j, false, texts);
    for (const std::string& text : texts) {
        if (auto score = parse_score_text(text)) return score;
    }
    return std::nullopt;
}

}  // namespace driverl
