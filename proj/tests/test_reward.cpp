// Copyright 2026 the driverl authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <numeric>
#include <vector>

#include <driverl/reward.hpp>
#include <driverl/rng.hpp>

#include "support/oracles.hpp"

using namespace driverl;

namespace {

// Counts calls and delegates to MockJudge; used to observe gate short-circuits.
class CountingJudge : public Judge {
   public:
    double score(const JudgeRequest& req) override {
        ++calls;
        return inner.score(req);
    }
    std::string id() const override { return "counting"; }
    int calls = 0;
    MockJudge inner;
};

class FailingJudge : public Judge {
   public:
    double score(const JudgeRequest&) override { throw std::runtime_error("judge down"); }
    std::string id() const override { return "failing"; }
};

std::vector<int> repeated_phrase_tokens() {
    // the same 8-token phrase four times: 32 tokens, 25 8-grams, 8 distinct
    std::vector<int> tokens;
    for (int rep = 0; rep < 4; ++rep) {
        for (int t = 2; t < 10; ++t) tokens.push_back(t);
    }
    return tokens;
}

Question mock_question(const std::string& reference) {
    Question q;
    q.question_id = "q1";
    q.frame_id = "f1";
    q.task = {Task::Behavior, AnswerStyle::MultipleChoice};
    q.prompt_text = "pick the behavior";
    q.reference_answer = reference;
    return q;
}

Rollout rollout_of(std::vector<int> tokens, bool truncated = false) {
    Rollout r;
    r.prompt_tokens = {Vocab::kBos};
    r.output_tokens = std::move(tokens);
    r.sample_logprobs.assign(r.output_tokens.size(), -1.0);
    r.truncated = truncated;
    return r;
}

}  // namespace

TEST_CASE("repetition_ratio is zero for distinct tokens and short inputs") {
    std::vector<int> distinct(16);
    std::iota(distinct.begin(), distinct.end(), 0);
    CHECK(repetition_ratio(distinct, 8) == 0.0);

    std::vector<int> short_seq = {1, 2, 3, 4, 5};
    CHECK(repetition_ratio(short_seq, 8) == 0.0);
}

TEST_CASE("repetition_ratio matches the repeated-phrase fixture") {
    const auto tokens = repeated_phrase_tokens();
    CHECK(repetition_ratio(tokens, 8) == Catch::Approx(0.68).margin(1e-12));
    CHECK(oracles::brute_force_ngram_ratio(tokens, 8) == Catch::Approx(0.68).margin(1e-12));
}

TEST_CASE("repetition_ratio agrees with brute-force enumeration on random sequences") {
    Rng rng(42);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t len = rng.uniform_index(60);
        std::vector<int> tokens(len);
        for (auto& t : tokens) t = static_cast<int>(rng.uniform_index(4));
        const int n = 2 + static_cast<int>(rng.uniform_index(6));
        CHECK(repetition_ratio(tokens, n) ==
              Catch::Approx(oracles::brute_force_ngram_ratio(tokens, n)).margin(1e-12));
    }
}

TEST_CASE("rule_gate zero-rewards overlength responses") {
    RewardConfig cfg;
    std::vector<int> tokens(5000);
    std::iota(tokens.begin(), tokens.end(), 0);
    const auto gate = rule_gate(tokens, cfg);
    CHECK_FALSE(gate.passed);
    CHECK(gate.reason == GateReason::Overlength);

    tokens.resize(4096);
    CHECK(rule_gate(tokens, cfg).passed);  // exactly 4K passes; only beyond is gated
    tokens.resize(4097);
    std::iota(tokens.begin(), tokens.end(), 0);
    CHECK_FALSE(rule_gate(tokens, cfg).passed);
}

TEST_CASE("rule_gate passes clean responses and catches repetition") {
    RewardConfig cfg;
    std::vector<int> clean(100);
    std::iota(clean.begin(), clean.end(), 0);
    CHECK(rule_gate(clean, cfg).passed);

    const auto gate = rule_gate(repeated_phrase_tokens(), cfg);  // ratio 0.68 >= 0.5
    CHECK_FALSE(gate.passed);
    CHECK(gate.reason == GateReason::Repetition);
}

TEST_CASE("normalize_advantages standardizes the three-point fixture") {
    GroupRewards group;
    group.rewards = {0, 50, 100};
    group.gated = {false, false, false};
    const auto adv = normalize_advantages(group, 1e-6);
    REQUIRE(adv.values.size() == 3);
    CHECK(adv.values[0] == Catch::Approx(-1.224745).margin(1e-6));
    CHECK(adv.values[1] == Catch::Approx(0.0).margin(1e-12));
    CHECK(adv.values[2] == Catch::Approx(1.224745).margin(1e-6));
}

TEST_CASE("normalize_advantages guards zero-variance groups") {
    GroupRewards group;
    group.rewards = {70, 70, 70};
    group.gated = {false, false, false};
    for (double v : normalize_advantages(group, 1e-6).values) CHECK(v == 0.0);

    GroupRewards single;
    single.rewards = {88};
    single.gated = {false};
    CHECK(normalize_advantages(single, 1e-6).values == std::vector<double>{0.0});
}

TEST_CASE("normalized advantages have zero mean and unit population std") {
    Rng rng(314159);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t g = 2 + rng.uniform_index(15);
        GroupRewards group;
        for (std::size_t i = 0; i < g; ++i) group.rewards.push_back(rng.uniform() * 100.0);
        group.gated.assign(g, false);
        const auto adv = normalize_advantages(group, 1e-6);
        const auto [mean, stddev] = oracles::naive_mean_population_std(adv.values);
        if (oracles::naive_mean_population_std(group.rewards).second <= 1e-6) continue;
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(stddev - 1.0) < 1e-6);
    }
}

TEST_CASE("advantages are invariant to shifting and positive scaling of rewards") {
    Rng rng(999);
    GroupRewards group;
    for (int i = 0; i < 8; ++i) group.rewards.push_back(rng.uniform() * 50.0);
    group.gated.assign(8, false);
    const auto base = normalize_advantages(group, 1e-9);

    GroupRewards shifted = group;
    for (double& r : shifted.rewards) r += 13.0;
    GroupRewards scaled = group;
    for (double& r : scaled.rewards) r *= 1.7;

    const auto adv_shifted = normalize_advantages(shifted, 1e-9);
    const auto adv_scaled = normalize_advantages(scaled, 1e-9);
    for (std::size_t i = 0; i < base.values.size(); ++i) {
        CHECK(adv_shifted.values[i] == Catch::Approx(base.values[i]).margin(1e-9));
        CHECK(adv_scaled.values[i] == Catch::Approx(base.values[i]).margin(1e-9));
    }

    // monotone affine map: the best reward stays the best advantage
    const auto best_reward = std::max_element(group.rewards.begin(), group.rewards.end()) -
                             group.rewards.begin();
    const auto best_adv =
        std::max_element(base.values.begin(), base.values.end()) - base.values.begin();
    CHECK(best_reward == best_adv);
}

TEST_CASE("MockJudge scores token overlap") {
    MockJudge judge;
    JudgeRequest req;
    req.task = {Task::Planning, AnswerStyle::OpenEnded};
    req.question = "what now";

    req.reference_answer = "turn left";
    req.response = "turn left";
    CHECK(judge.score(req) == 100.0);

    req.response = "go straight";
    CHECK(judge.score(req) == 0.0);

    req.response = "turn left now";  // precision 2/3, recall 1 -> F1 0.8
    CHECK(judge.score(req) == 80.0);
    CHECK(oracles::brute_force_bag_f1("turn left", "turn left now") ==
          Catch::Approx(0.8).margin(1e-12));
}

TEST_CASE("MockJudge is symmetric in the token-multiset sense") {
    Rng rng(5);
    const std::vector<std::string> words = {"go", "stop", "left", "right", "near"};
    MockJudge judge;
    for (int trial = 0; trial < 50; ++trial) {
        auto sentence = [&] {
            std::string s;
            const std::size_t len = rng.uniform_index(6);
            for (std::size_t i = 0; i < len; ++i) {
                if (!s.empty()) s += ' ';
                s += words[rng.uniform_index(words.size())];
            }
            return s;
        };
        const std::string a = sentence(), b = sentence();
        JudgeRequest fwd{{Task::Planning, AnswerStyle::OpenEnded}, "q", a, b};
        JudgeRequest rev{{Task::Planning, AnswerStyle::OpenEnded}, "q", b, a};
        CHECK(judge.score(fwd) == judge.score(rev));
    }
}

TEST_CASE("score_group gates first and judges the rest") {
    const Vocab vocab = Vocab::default_desk();
    RewardConfig cfg;
    cfg.max_tokens = 8;

    // rollout 0: overlength; rollout 1: decodes to the exact reference
    std::vector<Rollout> rollouts;
    std::vector<int> longtokens(9);
    std::iota(longtokens.begin(), longtokens.end(), 2);
    rollouts.push_back(rollout_of(longtokens, true));
    rollouts.push_back(rollout_of({*vocab.find("turn"), *vocab.find("left"), Vocab::kEos}));

    CountingJudge judge;
    const auto rewards = score_group(rollouts, mock_question("turn left"), judge, cfg, vocab);
    CHECK(rewards.rewards == std::vector<double>{0.0, 100.0});
    CHECK(rewards.gated == std::vector<bool>{true, false});
    CHECK(judge.calls == 1);  // the gated rollout never reached the judge
}

TEST_CASE("score_group with everything gated makes zero judge calls") {
    const Vocab vocab = Vocab::default_desk();
    RewardConfig cfg;
    cfg.max_tokens = 2;
    std::vector<Rollout> rollouts;
    for (int i = 0; i < 3; ++i) {
        rollouts.push_back(rollout_of({2, 3, 4, 5}, true));
    }
    CountingJudge judge;
    const auto rewards = score_group(rollouts, mock_question("turn left"), judge, cfg, vocab);
    CHECK(judge.calls == 0);
    for (std::size_t i = 0; i < rewards.rewards.size(); ++i) {
        CHECK(rewards.rewards[i] == 0.0);
        CHECK(rewards.gated[i]);
    }
}

TEST_CASE("score_group single perfect match") {
    const Vocab vocab = Vocab::default_desk();
    RewardConfig cfg;
    std::vector<Rollout> rollouts = {
        rollout_of({*vocab.find("stop"), Vocab::kEos})};
    MockJudge judge;
    const auto rewards = score_group(rollouts, mock_question("stop"), judge, cfg, vocab);
    CHECK(rewards.rewards == std::vector<double>{100.0});
}

TEST_CASE("a judge failure on any ungated rollout fails the whole group") {
    const Vocab vocab = Vocab::default_desk();
    RewardConfig cfg;
    std::vector<Rollout> rollouts = {rollout_of({2, Vocab::kEos})};
    FailingJudge judge;
    CHECK_THROWS_WITH(score_group(rollouts, mock_question("stop"), judge, cfg, vocab),
                      Catch::Matchers::ContainsSubstring("judge down"));
}

TEST_CASE("reward config validation") {
    RewardConfig cfg;
    cfg.repetition_ngram = 1;
    CHECK_THROWS(cfg.validate());
    cfg = RewardConfig{};
    cfg.repetition_threshold = 1.5;
    CHECK_THROWS(cfg.validate());
    cfg = RewardConfig{};
    cfg.sigma_epsilon = 0.0;
    CHECK_THROWS(cfg.validate());
}
