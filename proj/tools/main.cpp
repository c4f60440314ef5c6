// Copyright 2026 the driverl authors
// SPDX-License-Identifier: Apache-2.0

// Command-line surface for the pipeline: score frames, build splits, train,
// evaluate, report, and probe the judge backend.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <driverl/driverl.hpp>

namespace fs = std::filesystem;
using namespace driverl;

namespace {

struct CommonFlags {
    std::string config_path;
    std::string judge_kind;
    std::string judge_url;
    bool seed_set = false;
    std::uint64_t seed = 0;
};

RunConfig effective_config(const CommonFlags& flags) {
    RunConfig cfg;
    if (!flags.config_path.empty()) cfg = load_run_config(flags.config_path);
    if (!flags.judge_kind.empty()) cfg.judge.kind = flags.judge_kind;
    if (!flags.judge_url.empty()) cfg.judge.http.url = flags.judge_url;
    if (flags.seed_set) {
        cfg.policy.seed = flags.seed;
        cfg.grpo.seed = flags.seed;
        cfg.dataset.seed = flags.seed;
    }
    return cfg;
}

std::unique_ptr<Judge> make_judge(const JudgeSelection& selection) {
    if (selection.kind == "mock") return std::make_unique<MockJudge>();
    if (selection.kind == "http") {
        if (selection.http.url.empty()) {
            throw std::runtime_error("http judge requires --judge-url or judge.url in the config");
        }
        return std::make_unique<HttpJudge>(selection.http);
    }
    throw std::runtime_error("unknown judge kind '" + selection.kind + "'");
}

// Desk vocabulary when the configured size matches it; otherwise generated
// placeholder symbols so any vocab_size stays runnable.
Vocab vocab_for(const PolicyConfig& cfg) {
    if (cfg.vocab_size == 32) return Vocab::default_desk();
    std::vector<std::string> symbols{"<bos>", "<eos>"};
    for (int i = 2; i < cfg.vocab_size; ++i) symbols.push_back("w" + std::to_string(i));
    return Vocab::from_symbols(std::move(symbols));
}

std::vector<Question> flatten(const std::vector<Frame>& frames) {
    std::vector<Question> questions;
    for (const Frame& f : frames) {
        questions.insert(questions.end(), f.questions.begin(), f.questions.end());
    }
    return questions;
}

std::set<std::string> read_exclusion_file(const std::string& path) {
    std::set<std::string> ids;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open exclusion file " + path);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) ids.insert(line);
    }
    return ids;
}

int run_score_data(const std::string& questions_path, const std::string& scores_path,
                   const std::string& out_path) {
    const auto frames = load_frames(questions_path);
    const auto table = SampleScoreTable::load(scores_path);
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    for (const Frame& f : frames) {
        const FrameScore score = frame_score(f, table);
        out << json{{"frame_id", score.frame_id}, {"score", score.score}}.dump() << '\n';
    }
    std::cout << "scored " << frames.size() << " frames -> " << out_path << '\n';
    return 0;
}

int run_build_dataset(const RunConfig& cfg, const std::string& questions_path,
                      const std::string& scores_path, const std::string& out_dir,
                      const std::string& exclude_path) {
    const auto frames = load_frames(questions_path);
    const auto table = SampleScoreTable::load(scores_path);

    SplitSpec train_spec;
    train_spec.lo = cfg.dataset.train_lo;
    train_spec.hi = cfg.dataset.train_hi;
    train_spec.balance_alpha = cfg.dataset.balance_alpha;
    train_spec.seed = cfg.dataset.seed;
    SplitSpec hard_spec;
    hard_spec.lo = cfg.dataset.hard_lo;
    hard_spec.hi = cfg.dataset.hard_hi;
    hard_spec.balance_alpha = cfg.dataset.balance_alpha;
    hard_spec.seed = cfg.dataset.seed;
    for (const auto& id : cfg.dataset.exclusions) {
        train_spec.exclusion_ids.insert(id);
        hard_spec.exclusion_ids.insert(id);
    }
    if (!exclude_path.empty()) {
        for (const auto& id : read_exclusion_file(exclude_path)) {
            train_spec.exclusion_ids.insert(id);
            hard_spec.exclusion_ids.insert(id);
        }
    }

    const auto result = build_splits(frames, table, train_spec, hard_spec);
    write_splits(out_dir, train_spec, hard_spec, result);
    std::cout << "train frames: " << result.train.size() << ", hard frames: "
              << result.hard.size() << " -> " << out_dir << '\n';
    return 0;
}

int run_train(const RunConfig& cfg, const std::string& data_path, const std::string& out_dir,
              int eval_every, const std::string& eval_data_path) {
    const auto questions = flatten(load_frames(data_path));
    if (questions.empty()) throw std::runtime_error("training split is empty: " + data_path);
    const Vocab vocab = vocab_for(cfg.policy);
    auto judge = make_judge(cfg.judge);

    fs::create_directories(out_dir);
    MetricsWriter writer(fs::path(out_dir) / "metrics.jsonl");

    std::vector<Question> eval_questions;
    if (!eval_data_path.empty()) eval_questions = flatten(load_frames(eval_data_path));
    StepCallback on_step;
    if (eval_every > 0 && !eval_questions.empty()) {
        on_step = [&, eval_every](const TrainState& state, const StepMetrics& metrics) {
            if (metrics.step % eval_every != 0) return;
            const auto report = evaluate_split(eval_questions, state.params, *judge, vocab,
                                               "validation", cfg.grpo.seed);
            std::ofstream out(fs::path(out_dir) /
                              ("eval_step_" + std::to_string(metrics.step) + ".json"));
            out << eval_report_to_json(report).dump(2) << '\n';
        };
    }

    const auto result = train(questions, init_params(cfg.policy), *judge, cfg.grpo, cfg.reward,
                              vocab, cfg.optimizer, &writer, out_dir, on_step);
    save_checkpoint(fs::path(out_dir) / "checkpoint_final.json",
                    Checkpoint{result.params.cfg, result.params.theta, AdamState{},
                               static_cast<std::int64_t>(result.metrics.size())});
    if (!result.metrics.empty()) {
        std::cout << "trained " << result.metrics.size() << " steps, final mean reward "
                  << result.metrics.back().mean_reward << '\n';
    } else {
        std::cout << "no steps run (epochs = 0)\n";
    }
    return 0;
}

int run_eval(const RunConfig& cfg, const std::string& checkpoint_path,
             const std::string& data_path, const std::string& out_path,
             const std::string& split_name, double temperature) {
    const auto ckpt = load_checkpoint(checkpoint_path);
    PolicyParams params{ckpt.cfg, ckpt.theta};
    const auto questions = flatten(load_frames(data_path));
    const Vocab vocab = vocab_for(ckpt.cfg);
    auto judge = make_judge(cfg.judge);
    const auto report = evaluate_split(questions, params, *judge, vocab, split_name,
                                       cfg.grpo.seed, temperature);
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    out << eval_report_to_json(report).dump(2) << '\n';
    std::cout << "evaluated " << questions.size() << " questions -> " << out_path << '\n';
    return 0;
}

int run_report(const std::string& metrics_path, const std::string& out_dir) {
    const auto rows = MetricsWriter::read_log(metrics_path);
    write_report(rows, out_dir);
    std::cout << "report for " << rows.size() << " steps -> " << out_dir << '\n';
    return 0;
}

int run_judge_check(const RunConfig& cfg, const std::string& task_name) {
    auto judge = make_judge(cfg.judge);
    JudgeRequest req;
    const auto task = parse_task(task_name);
    if (!task) throw std::runtime_error("unknown task '" + task_name + "'");
    req.task = {*task, AnswerStyle::OpenEnded};
    req.question = "sample scene check";
    req.reference_answer = "slow down";
    req.response = "slow down";
    const auto start = std::chrono::steady_clock::now();
    const double score = judge->score(req);
    const auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - start)
                             .count();
    std::cout << "judge " << judge->id() << " score " << score << " latency_ms " << latency
              << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale GRPO training engine and data-curation toolkit for driving VQA"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string questions_path, scores_path, data_path, out_path, checkpoint_path;
    std::string metrics_path, exclude_path, eval_data_path;
    std::string split_name = "eval";
    std::string task_name = "planning";
    std::vector<double> train_range, hard_range;
    double alpha = -1.0;
    double eval_temperature = 0.0;
    int epochs = -1, batch = -1, group = -1, eval_every = 0;

    auto add_common = [&](CLI::App* cmd, bool with_judge) {
        cmd->add_option("--config", flags.config_path, "run config file (JSON)");
        cmd->add_option("--seed", flags.seed, "seed overriding every config seed")
            ->each([&](const std::string&) { flags.seed_set = true; });
        if (with_judge) {
            cmd->add_option("--judge", flags.judge_kind, "judge backend")
                ->check(CLI::IsMember({"mock", "http"}));
            cmd->add_option("--judge-url", flags.judge_url, "chat-completion endpoint URL");
        }
    };

    CLI::App* score_data = app.add_subcommand(
        "score-data", "compute frame difficulty scores from a sample-score table");
    score_data->add_option("--questions", questions_path, "questions JSONL")->required();
    score_data->add_option("--scores", scores_path, "scores JSONL")->required();
    score_data->add_option("--out", out_path, "output frame-score JSONL")->required();

    CLI::App* build_dataset =
        app.add_subcommand("build-dataset", "filter, balance, and emit train/hard splits");
    build_dataset->add_option("--questions", questions_path, "questions JSONL")->required();
    build_dataset->add_option("--scores", scores_path, "scores JSONL")->required();
    build_dataset->add_option("--out", out_path, "output directory")->required();
    build_dataset->add_option("--train-range", train_range, "train split score range LO HI")
        ->expected(2);
    build_dataset->add_option("--hard-range", hard_range, "hard split score range LO HI")
        ->expected(2);
    build_dataset->add_option("--alpha", alpha, "action-balancing alpha in (0,1]");
    build_dataset->add_option("--exclude", exclude_path, "file of frame ids to exclude");
    add_common(build_dataset, false);

    CLI::App* train_cmd = app.add_subcommand("train", "run GRPO training on a split");
    train_cmd->add_option("--data", data_path, "train split JSONL")->required();
    train_cmd->add_option("--out", out_path, "output directory")->required();
    train_cmd->add_option("--epochs", epochs, "override grpo.epochs");
    train_cmd->add_option("--batch", batch, "override grpo.prompt_batch_size");
    train_cmd->add_option("--group", group, "override grpo.group_size (G)");
    train_cmd->add_option("--eval-every", eval_every, "validation interval in steps");
    train_cmd->add_option("--eval-data", eval_data_path, "validation split JSONL");
    add_common(train_cmd, true);

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint JSON")->required();
    eval_cmd->add_option("--data", data_path, "split JSONL")->required();
    eval_cmd->add_option("--out", out_path, "output report JSON")->required();
    eval_cmd->add_option("--split-name", split_name, "name recorded in the report");
    eval_cmd->add_option("--temperature", eval_temperature,
                         "decode by sampling at this temperature instead of argmax");
    add_common(eval_cmd, true);

    CLI::App* report_cmd =
        app.add_subcommand("report", "summarize a metrics log into CSV series");
    report_cmd->add_option("--metrics", metrics_path, "metrics JSONL")->required();
    report_cmd->add_option("--out", out_path, "output directory")->required();

    CLI::App* judge_check =
        app.add_subcommand("judge-check", "send a sample request to the judge backend");
    judge_check->add_option("--task", task_name, "task kind for the sample request");
    add_common(judge_check, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        RunConfig cfg = effective_config(flags);
        if (train_range.size() == 2) {
            cfg.dataset.train_lo = train_range[0];
            cfg.dataset.train_hi = train_range[1];
        }
        if (hard_range.size() == 2) {
            cfg.dataset.hard_lo = hard_range[0];
            cfg.dataset.hard_hi = hard_range[1];
        }
        if (alpha > 0.0) cfg.dataset.balance_alpha = alpha;
        if (epochs >= 0) cfg.grpo.epochs = epochs;
        if (batch > 0) cfg.grpo.prompt_batch_size = batch;
        if (group > 0) cfg.grpo.group_size = group;

        if (score_data->parsed()) return run_score_data(questions_path, scores_path, out_path);
        if (build_dataset->parsed()) {
            return run_build_dataset(cfg, questions_path, scores_path, out_path, exclude_path);
        }
        if (train_cmd->parsed()) {
            return run_train(cfg, data_path, out_path, eval_every, eval_data_path);
        }
        if (eval_cmd->parsed()) {
            return run_eval(cfg, checkpoint_path, data_path, out_path, split_name,
                            eval_temperature);
        }
        if (report_cmd->parsed()) return run_report(metrics_path, out_path);
        if (judge_check->parsed()) return run_judge_check(cfg, task_name);
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
