// Copyright 2026 the driverl authors
// SPDX-License-Identifier: Apache-2.0

// Minimal library walkthrough: build a tiny in-memory corpus, train for a few
// hundred steps with the mock judge, and print the reward trajectory.

#include <iostream>
#include <string>
#include <vector>

#include <driverl/driverl.hpp>

int main() {
    using namespace driverl;

    const Vocab vocab = Vocab::default_desk();
    std::vector<Question> corpus;
    const char* prompts[] = {"watch scene red", "road cross near", "lane park far",
                             "signal turn safe"};
    const char* references[] = {"car ahead left lane clear", "slow down yield wait go",
                                "go straight keeps lane safe", "keeps moving merge right ahead"};
    const Task tasks[] = {Task::Perception, Task::Planning, Task::Behavior, Task::Prediction};
    for (int i = 0; i < 4; ++i) {
        Question q;
        q.question_id = "q" + std::to_string(i);
        q.frame_id = "f" + std::to_string(i);
        q.task = {tasks[i], AnswerStyle::OpenEnded};
        q.prompt_text = prompts[i];
        q.reference_answer = references[i];
        corpus.push_back(q);
    }

    PolicyConfig policy_cfg;
    policy_cfg.max_len = 10;
    policy_cfg.context_window = 16;
    policy_cfg.embed_dim = 24;
    policy_cfg.hidden_dim = 48;
    policy_cfg.seed = 7;
    GrpoConfig grpo_cfg;
    grpo_cfg.prompt_batch_size = 4;
    grpo_cfg.epochs = 150;
    grpo_cfg.seed = 7;

    MockJudge judge;
    const auto result =
        train(corpus, init_params(policy_cfg), judge, grpo_cfg, RewardConfig{}, vocab);

    std::cout << "step  mean_reward  mean_len  clip_ratio\n";
    for (std::size_t i = 0; i < result.metrics.size(); i += 15) {
        const auto& m = result.metrics[i];
        std::cout << m.step << "  " << m.mean_reward << "  " << m.mean_response_length << "  "
                  << m.overlength_clip_ratio << '\n';
    }
    const auto& last = result.metrics.back();
    std::cout << "final step " << last.step << " mean reward " << last.mean_reward << '\n';

    // what the trained policy says for the first prompt
    const Rollout decoded = greedy_decode(result.params, vocab.encode_prompt(prompts[0]));
    std::cout << "greedy answer for '" << prompts[0] << "': '"
              << vocab.decode(decoded.output_tokens) << "' (reference '" << references[0]
              << "')\n";
    return 0;
}
