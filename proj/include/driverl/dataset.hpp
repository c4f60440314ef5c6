// Copyright 2026 the driverl authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "driverl/jsonl.hpp"
#include "driverl/rng.hpp"
#include "driverl/types.hpp"

namespace driverl {

// ---------------------------------------------------------------------------
// Sample score table: (question_id, model_id, sample_index) -> score in [0,100]
// ---------------------------------------------------------------------------

class SampleScoreTable {
   public:
    void add(const std::string& question_id, const std::string& model_id,
             int sample_index, double score) {
        if (score < 0.0 || score > 100.0 || !std::isfinite(score)) {
            throw std::runtime_error("score out of [0,100] for question '" + question_id +
                                     "', model '" + model_id + "', sample " +
                                     std::to_string(sample_index));
        }
        if (sample_index < 0) {
            throw std::runtime_error("negative sample_index for question '" + question_id + "'");
        }
        auto& per_model = entries_[question_id];
        auto [it, inserted] = per_model[model_id].emplace(sample_index, score);
        if (!inserted) {
            throw std::runtime_error("duplicate score entry for question '" + question_id +
                                     "', model '" + model_id + "', sample " +
                                     std::to_string(sample_index));
        }
        model_ids_.insert(model_id);
        samples_per_model_ = std::max(samples_per_model_, sample_index + 1);
    }

    static SampleScoreTable load(const std::filesystem::path& path) {
        SampleScoreTable table;
        for_each_jsonl_line(path, [&](int line_no, const json& j) {
            const std::string where = path.string() + ":" + std::to_string(line_no);
            require_key(j, "question_id", where);
            require_key(j, "model_id", where);
            require_key(j, "sample_index", where);
            require_key(j, "score", where);
            if (!j["score"].is_number()) {
                throw std::runtime_error(where + ": 'score' must be a number");
            }
            table.add(j["question_id"].get<std::string>(), j["model_id"].get<std::string>(),
                      j["sample_index"].get<int>(), j["score"].get<double>());
        });
        return table;
    }

    int model_count() const { return static_cast<int>(model_ids_.size()); }
    int samples_per_model() const { return samples_per_model_; }
    const std::set<std::string>& model_ids() const { return model_ids_; }

    bool has_question(const std::string& question_id) const {
        return entries_.count(question_id) > 0;
    }

    // Throws naming the exact gap; frame scoring presumes a complete table,
    // no imputation.
    double get(const std::string& question_id, const std::string& model_id,
               int sample_index) const {
        auto qit = entries_.find(question_id);
        if (qit == entries_.end()) {
            throw std::runtime_error("no scores for question '" + question_id + "'");
        }
        auto mit = qit->second.find(model_id);
        if (mit == qit->second.end()) {
            throw std::runtime_error("missing score for question '" + question_id +
                                     "', model '" + model_id + "'");
        }
        auto sit = mit->second.find(sample_index);
        if (sit == mit->second.end()) {
            throw std::runtime_error("missing score for question '" + question_id +
                                     "', model '" + model_id + "', sample " +
                                     std::to_string(sample_index));
        }
        return sit->second;
    }

   private:
    // question_id -> model_id -> sample_index -> score
    std::map<std::string, std::map<std::string, std::map<int, double>>> entries_;
    std::set<std::string> model_ids_;
    int samples_per_model_ = 0;
};

// ---------------------------------------------------------------------------
// Question / frame ingestion
// ---------------------------------------------------------------------------

inline Question question_from_json(const json& j, const std::string& where) {
    for (const char* key : {"question_id", "frame_id", "task", "prompt_text"}) {
        require_key(j, key, where);
    }
    Question q;
    q.question_id = j["question_id"].get<std::string>();
    q.frame_id = j["frame_id"].get<std::string>();
    if (q.frame_id.empty()) throw std::runtime_error(where + ": empty frame_id");
    if (q.question_id.empty()) throw std::runtime_error(where + ": empty question_id");

    auto task = parse_task(j["task"].get<std::string>());
    if (!task) {
        throw std::runtime_error(where + ": unknown task '" + j["task"].get<std::string>() + "'");
    }
    q.task.task = *task;
    if (j.contains("answer_style")) {
        auto style = parse_answer_style(j["answer_style"].get<std::string>());
        if (!style) {
            throw std::runtime_error(where + ": unknown answer_style '" +
                                     j["answer_style"].get<std::string>() + "'");
        }
        q.task.style = *style;
    }
    q.prompt_text = j["prompt_text"].get<std::string>();
    if (q.prompt_text.empty()) throw std::runtime_error(where + ": empty prompt_text");
    if (j.contains("image_refs")) {
        q.image_refs = j["image_refs"].get<std::vector<std::string>>();
    }
    if (j.contains("reference_answer")) {
        q.reference_answer = j["reference_answer"].get<std::string>();
    }
    if (j.contains("action_label") && !j["action_label"].is_null()) {
        q.action_label = j["action_label"].get<std::string>();
    }
    return q;  // unknown keys ignored
}

inline json question_to_json(const Question& q) {
    json j;
    j["question_id"] = q.question_id;
    j["frame_id"] = q.frame_id;
    j["task"] = to_string(q.task.task);
    j["answer_style"] = to_string(q.task.style);
    j["prompt_text"] = q.prompt_text;
    j["image_refs"] = q.image_refs;
    j["reference_answer"] = q.reference_answer;
    if (q.action_label) j["action_label"] = *q.action_label;
    return j;
}

// Groups questions by frame_id, input order preserved within a frame;
// frames come back sorted by frame_id.
inline std::vector<Frame> load_frames(const std::filesystem::path& path) {
    std::map<std::string, Frame> by_frame;
    std::unordered_set<std::string> seen_ids;
    for_each_jsonl_line(path, [&](int line_no, const json& j) {
        const std::string where = path.string() + ":" + std::to_string(line_no);
        Question q = question_from_json(j, where);
        if (!seen_ids.insert(q.question_id).second) {
            throw std::runtime_error(where + ": duplicate question_id '" + q.question_id + "'");
        }
        Frame& f = by_frame[q.frame_id];
        f.frame_id = q.frame_id;
        f.questions.push_back(std::move(q));
    });
    std::vector<Frame> frames;
    frames.reserve(by_frame.size());
    for (auto& [_, f] : by_frame) frames.push_back(std::move(f));
    return frames;
}

// ---------------------------------------------------------------------------
// Frame difficulty score: triple-nested mean over questions, models, samples
// ---------------------------------------------------------------------------

inline FrameScore frame_score(const Frame& frame, const SampleScoreTable& scores) {
    if (frame.questions.empty()) {
        throw std::runtime_error("frame '" + frame.frame_id + "' has no questions");
    }
    const int models = scores.model_count();
    const int samples = scores.samples_per_model();
    if (models == 0 || samples == 0) {
        throw std::runtime_error("score table is empty");
    }
    double question_mean_sum = 0.0;
    for (const Question& q : frame.questions) {
        double model_mean_sum = 0.0;
        for (const std::string& model : scores.model_ids()) {
            double sample_sum = 0.0;
            for (int k = 0; k < samples; ++k) {
                sample_sum += scores.get(q.question_id, model, k);
            }
            model_mean_sum += sample_sum / samples;
        }
        question_mean_sum += model_mean_sum / models;
    }
    return FrameScore{frame.frame_id, question_mean_sum / static_cast<double>(frame.questions.size())};
}

// ---------------------------------------------------------------------------
// Filtering and balancing
// ---------------------------------------------------------------------------

// Keeps frames with lo <= D <= hi (inclusive both ends), returned in
// ascending score order with frame_id as tie-break.
inline std::vector<std::string> filter_by_score_range(std::vector<FrameScore> frames,
                                                      double lo, double hi) {
    if (lo > hi) throw std::invalid_argument("score range: lo > hi");
    std::sort(frames.begin(), frames.end(), [](const FrameScore& a, const FrameScore& b) {
        if (a.score != b.score) return a.score < b.score;
        return a.frame_id < b.frame_id;
    });
    std::vector<std::string> out;
    for (const FrameScore& f : frames) {
        if (f.score >= lo && f.score <= hi) out.push_back(f.frame_id);
    }
    return out;
}

inline std::vector<std::string> exclude_overlap(const std::vector<std::string>& ids,
                                                const std::set<std::string>& exclusion) {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (const std::string& id : ids) {
        if (!exclusion.count(id)) out.push_back(id);
    }
    return out;
}

// A frame's action class is the label of its behavior question when one is
// labeled, otherwise the first labeled question in input order.
inline std::optional<std::string> frame_action_class(const Frame& frame) {
    for (const Question& q : frame.questions) {
        if (q.task.task == Task::Behavior && q.action_label) return q.action_label;
    }
    for (const Question& q : frame.questions) {
        if (q.action_label) return q.action_label;
    }
    return std::nullopt;
}

// Oversamples rare action classes by duplicating frames until every class
// count reaches ceil(alpha * max class count). Classless frames pass through.
inline std::vector<Frame> balance_actions(const std::vector<Frame>& frames, double alpha,
                                          std::uint64_t seed) {
    if (alpha <= 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must be in (0,1]");
    if (frames.empty()) return {};
    std::map<std::string, std::vector<std::size_t>> class_members;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (auto cls = frame_action_class(frames[i])) {
            class_members[*cls].push_back(i);
        }
    }
    if (class_members.empty()) {
        throw std::runtime_error("nothing to balance: no frame carries an action_label");
    }
    std::size_t max_count = 0;
    for (const auto& [_, members] : class_members) {
        max_count = std::max(max_count, members.size());
    }
    const auto target =
        static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(max_count)));

    std::vector<Frame> out = frames;
    Rng rng(mix_seed(seed, fnv1a64("balance_actions")));
    for (const auto& [cls, members] : class_members) {  // std::map: stable class order
        for (std::size_t have = members.size(); have < target; ++have) {
            out.push_back(frames[members[rng.uniform_index(members.size())]]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Split construction
// ---------------------------------------------------------------------------

struct SplitSpec {
    double lo = 0.0;
    double hi = 100.0;
    std::set<std::string> exclusion_ids;
    double balance_alpha = 0.5;
    std::uint64_t seed = 0;

    void validate() const {
        if (lo < 0.0 || hi > 100.0 || lo > hi) {
            throw std::invalid_argument("split range must satisfy 0 <= lo <= hi <= 100");
        }
        if (balance_alpha <= 0.0 || balance_alpha > 1.0) {
            throw std::invalid_argument("balance_alpha must be in (0,1]");
        }
    }
};

struct SplitResult {
    std::vector<Frame> train;
    std::vector<Frame> hard;
    std::map<std::string, std::size_t> action_counts_before;  // train selection, pre-balancing
    std::map<std::string, std::size_t> action_counts_after;
    std::vector<FrameScore> frame_scores;  // all input frames
};

inline std::vector<Frame> select_frames(const std::vector<Frame>& frames,
                                        const std::vector<std::string>& ids) {
    std::unordered_map<std::string, const Frame*> by_id;
    for (const Frame& f : frames) by_id[f.frame_id] = &f;
    std::vector<Frame> out;
    out.reserve(ids.size());
    for (const std::string& id : ids) out.push_back(*by_id.at(id));
    return out;
}

inline std::map<std::string, std::size_t> count_action_classes(const std::vector<Frame>& frames) {
    std::map<std::string, std::size_t> counts;
    for (const Frame& f : frames) {
        if (auto cls = frame_action_class(f)) ++counts[*cls];
    }
    return counts;
}

// Train split: mid-range filter -> exclusions -> action balancing.
// Hard split: its own range and exclusions, minus anything in train; never balanced.
inline SplitResult build_splits(const std::vector<Frame>& frames, const SampleScoreTable& scores,
                                const SplitSpec& train_spec, const SplitSpec& hard_spec) {
    train_spec.validate();
    hard_spec.validate();

    std::vector<FrameScore> all_scores;
    all_scores.reserve(frames.size());
    for (const Frame& f : frames) all_scores.push_back(frame_score(f, scores));

    auto train_ids = exclude_overlap(filter_by_score_range(all_scores, train_spec.lo, train_spec.hi),
                                     train_spec.exclusion_ids);
    std::vector<Frame> train_frames = select_frames(frames, train_ids);

    SplitResult result;
    result.frame_scores = std::move(all_scores);
    result.action_counts_before = count_action_classes(train_frames);
    result.train = balance_actions(train_frames, train_spec.balance_alpha, train_spec.seed);
    result.action_counts_after = count_action_classes(result.train);

    std::set<std::string> train_member_ids(train_ids.begin(), train_ids.end());
    auto hard_ids = exclude_overlap(filter_by_score_range(result.frame_scores, hard_spec.lo, hard_spec.hi),
                                    hard_spec.exclusion_ids);
    hard_ids = exclude_overlap(hard_ids, train_member_ids);
    result.hard = select_frames(frames, hard_ids);
    return result;
}

// ---------------------------------------------------------------------------
// Split emission
// ---------------------------------------------------------------------------

// Balancing produces repeated frames; repeated occurrences get a "~dupN"
// suffix on frame_id and question_id so split files keep ids unique and
// round-trip through load_frames.
inline void write_questions_jsonl(const std::filesystem::path& path,
                                  const std::vector<Frame>& frames) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    std::unordered_map<std::string, int> occurrences;
    for (const Frame& f : frames) {
        const int occurrence = occurrences[f.frame_id]++;
        const std::string suffix = occurrence == 0 ? "" : "~dup" + std::to_string(occurrence);
        for (const Question& q : f.questions) {
            Question copy = q;
            copy.frame_id += suffix;
            copy.question_id += suffix;
            out << question_to_json(copy).dump() << '\n';
        }
    }
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline json split_manifest(const SplitSpec& train_spec, const SplitSpec& hard_spec,
                           const SplitResult& result) {
    json m;
    m["train_range"] = {train_spec.lo, train_spec.hi};
    m["hard_range"] = {hard_spec.lo, hard_spec.hi};
    m["balance_alpha"] = train_spec.balance_alpha;
    m["seed"] = train_spec.seed;
    m["excluded_ids"] = {{"train", train_spec.exclusion_ids.size()},
                         {"hard", hard_spec.exclusion_ids.size()}};
    std::size_t train_questions = 0, hard_questions = 0;
    for (const Frame& f : result.train) train_questions += f.questions.size();
    for (const Frame& f : result.hard) hard_questions += f.questions.size();
    m["counts"] = {{"train_frames", result.train.size()},
                   {"train_questions", train_questions},
                   {"hard_frames", result.hard.size()},
                   {"hard_questions", hard_questions}};
    m["action_counts_before"] = result.action_counts_before;
    m["action_counts_after"] = result.action_counts_after;
    return m;
}

inline void write_splits(const std::filesystem::path& out_dir, const SplitSpec& train_spec,
                         const SplitSpec& hard_spec, const SplitResult& result) {
    std::filesystem::create_directories(out_dir);
    write_questions_jsonl(out_dir / "train.jsonl", result.train);
    write_questions_jsonl(out_dir / "hard.jsonl", result.hard);
    std::ofstream manifest(out_dir / "manifest.json");
    if (!manifest) throw std::runtime_error("cannot write manifest.json");
    manifest << split_manifest(train_spec, hard_spec, result).dump(2) << '\n';
}

}  // namespace driverl
