// Copyright 2026 the driverl authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace driverl {

// The four reasoning stages every question belongs to.
enum class Task { Perception, Prediction, Planning, Behavior };

// How the expected answer is phrased; drives rubric routing.
enum class AnswerStyle { MultipleChoice, OpenEnded, YesNo };

constexpr int kTaskCount = 4;

constexpr const char* to_string(Task t) {
    switch (t) {
        case Task::Perception: return "perception";
        case Task::Prediction: return "prediction";
        case Task::Planning: return "planning";
        case Task::Behavior: return "behavior";
    }
    return "?";
}

constexpr const char* to_string(AnswerStyle s) {
    switch (s) {
        case AnswerStyle::MultipleChoice: return "multiple_choice";
        case AnswerStyle::OpenEnded: return "open_ended";
        case AnswerStyle::YesNo: return "yes_no";
    }
    return "?";
}

inline std::optional<Task> parse_task(std::string_view s) {
    if (s == "perception") return Task::Perception;
    if (s == "prediction") return Task::Prediction;
    if (s == "planning") return Task::Planning;
    if (s == "behavior") return Task::Behavior;
    return std::nullopt;
}

inline std::optional<AnswerStyle> parse_answer_style(std::string_view s) {
    if (s == "multiple_choice") return AnswerStyle::MultipleChoice;
    if (s == "open_ended") return AnswerStyle::OpenEnded;
    if (s == "yes_no") return AnswerStyle::YesNo;
    return std::nullopt;
}

constexpr Task kAllTasks[kTaskCount] = {Task::Perception, Task::Prediction,
                                        Task::Planning, Task::Behavior};

// Task value plus answer-style flag; both always set.
struct TaskKind {
    Task task = Task::Perception;
    AnswerStyle style = AnswerStyle::OpenEnded;

    friend bool operator==(const TaskKind&, const TaskKind&) = default;
};

// One VQA item. Images are opaque references; the engine never opens them.
struct Question {
    std::string question_id;
    std::string frame_id;
    TaskKind task;
    std::string prompt_text;
    std::vector<std::string> image_refs;
    std::string reference_answer;
    std::optional<std::string> action_label;
};

// All questions sharing one image frame; the unit of curation.
struct Frame {
    std::string frame_id;
    std::vector<Question> questions;
};

struct FrameScore {
    std::string frame_id;
    double score = 0.0;  // in [0,100]
};

}  // namespace driverl
