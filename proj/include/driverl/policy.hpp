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
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "driverl/rng.hpp"

namespace driverl {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

// Word-level vocabulary with dense ids; slots 0 and 1 are reserved markers.
class Vocab {
   public:
    static constexpr int kBos = 0;
    static constexpr int kEos = 1;

    static Vocab from_symbols(std::vector<std::string> symbols) {
        if (symbols.size() < 3) throw std::invalid_argument("vocab needs at least 3 symbols");
        Vocab v;
        v.symbols_ = std::move(symbols);
        for (std::size_t i = 0; i < v.symbols_.size(); ++i) {
            if (!v.index_.emplace(v.symbols_[i], static_cast<int>(i)).second) {
                throw std::invalid_argument("duplicate vocab symbol '" + v.symbols_[i] + "'");
            }
        }
        return v;
    }

    // 32-symbol desk vocabulary used by the synthetic corpora.
    static Vocab default_desk() {
        return from_symbols({
            "<bos>",  "<eos>",  "car",    "ahead",  "left",  "right", "straight", "slow",
            "down",   "stop",   "go",     "keeps",  "moving", "lane", "turn",     "signal",
            "red",    "green",  "clear",  "road",   "scene",  "safe", "wait",     "yield",
            "speed",  "brake",  "near",   "far",    "merge",  "cross", "park",    "watch",
        });
    }

    int size() const { return static_cast<int>(symbols_.size()); }

    const std::string& symbol(int id) const { return symbols_.at(static_cast<std::size_t>(id)); }

    std::optional<int> find(std::string_view word) const {
        auto it = index_.find(std::string(word));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    // Known words map to their id; unknown words hash deterministically into
    // the non-reserved range so arbitrary prompt text stays encodable.
    int encode_word(std::string_view word) const {
        if (auto id = find(word)) return *id;
        const auto bucket = fnv1a64(word) % static_cast<std::uint64_t>(size() - 2);
        return static_cast<int>(bucket) + 2;
    }

    // BOS followed by one id per whitespace-separated word.
    std::vector<int> encode_prompt(std::string_view text) const {
        std::vector<int> ids{kBos};
        std::size_t i = 0;
        while (i < text.size()) {
            while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
            std::size_t start = i;
            while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
            if (i > start) ids.push_back(encode_word(text.substr(start, i - start)));
        }
        return ids;
    }

    // Words joined by single spaces; reserved markers are dropped.
    std::string decode(std::span<const int> ids) const {
        std::string out;
        for (int id : ids) {
            if (id == kBos || id == kEos) continue;
            if (!out.empty()) out += ' ';
            out += symbol(id);
        }
        return out;
    }

   private:
    std::vector<std::string> symbols_;
    std::map<std::string, int> index_;
};

// ---------------------------------------------------------------------------
// Policy configuration and parameters
// ---------------------------------------------------------------------------

struct PolicyConfig {
    int vocab_size = 32;      // V
    int embed_dim = 16;       // d
    int hidden_dim = 32;      // h
    int context_window = 8;   // w: tokens of context that are mean-pooled
    int max_len = 16;         // rollout cap; paper-scale value stays expressible
    double temperature = 1.0; // sampling temperature
    double init_scale = 0.1;
    std::uint64_t seed = 0;

    void validate() const {
        if (vocab_size < 3) throw std::invalid_argument("vocab_size must be >= 3");
        if (embed_dim < 1 || hidden_dim < 1 || context_window < 1) {
            throw std::invalid_argument("policy dimensions must be positive");
        }
        if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
        if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
        if (init_scale < 0.0) throw std::invalid_argument("init_scale must be >= 0");
    }

    std::size_t embed_count() const { return std::size_t(vocab_size) * embed_dim; }
    std::size_t hidden_w_count() const { return std::size_t(embed_dim) * hidden_dim; }
    std::size_t out_w_count() const { return std::size_t(hidden_dim) * vocab_size; }
    std::size_t param_count() const {
        return embed_count() + hidden_w_count() + hidden_dim + out_w_count() + vocab_size;
    }

    friend bool operator==(const PolicyConfig&, const PolicyConfig&) = default;
};

// Flat parameter vector: [embedding V*d | W1 d*h | b1 h | W2 h*V | b2 V].
struct PolicyParams {
    PolicyConfig cfg;
    std::vector<double> theta;

    double* embed_row(int token) { return theta.data() + std::size_t(token) * cfg.embed_dim; }
    const double* embed_row(int token) const {
        return theta.data() + std::size_t(token) * cfg.embed_dim;
    }
    std::size_t w1_offset() const { return cfg.embed_count(); }
    std::size_t b1_offset() const { return w1_offset() + cfg.hidden_w_count(); }
    std::size_t w2_offset() const { return b1_offset() + cfg.hidden_dim; }
    std::size_t b2_offset() const { return w2_offset() + cfg.out_w_count(); }
};

inline PolicyParams init_params(const PolicyConfig& cfg) {
    cfg.validate();
    PolicyParams p;
    p.cfg = cfg;
    p.theta.resize(cfg.param_count());
    Rng rng(mix_seed(cfg.seed, fnv1a64("init_params")));
    for (double& v : p.theta) v = rng.uniform_symmetric(cfg.init_scale);
    return p;
}

// Deep immutable-by-copy snapshot; serves as both behavior and reference policy.
inline PolicyParams snapshot(const PolicyParams& params) { return params; }

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

// Mean-pooled embedding of the last <= context_window tokens; empty context
// pools to the zero vector.
inline std::vector<double> pool_context(const PolicyParams& p, std::span<const int> context) {
    const auto& cfg = p.cfg;
    std::vector<double> x(static_cast<std::size_t>(cfg.embed_dim), 0.0);
    const std::size_t take = std::min<std::size_t>(context.size(), cfg.context_window);
    if (take == 0) return x;
    for (std::size_t c = context.size() - take; c < context.size(); ++c) {
        const int tok = context[c];
        if (tok < 0 || tok >= cfg.vocab_size) {
            throw std::out_of_range("context token id out of vocab range");
        }
        const double* row = p.embed_row(tok);
        for (int a = 0; a < cfg.embed_dim; ++a) x[a] += row[a];
    }
    for (double& v : x) v /= static_cast<double>(take);
    return x;
}

// Raw (untempered) next-token logits for the given context.
inline std::vector<double> logits(const PolicyParams& p, std::span<const int> context) {
    const auto& cfg = p.cfg;
    const std::vector<double> x = pool_context(p, context);

    const double* w1 = p.theta.data() + p.w1_offset();
    const double* b1 = p.theta.data() + p.b1_offset();
    std::vector<double> hidden(static_cast<std::size_t>(cfg.hidden_dim));
    for (int j = 0; j < cfg.hidden_dim; ++j) {
        double acc = b1[j];
        for (int a = 0; a < cfg.embed_dim; ++a) acc += x[a] * w1[std::size_t(a) * cfg.hidden_dim + j];
        hidden[j] = std::tanh(acc);
    }

    const double* w2 = p.theta.data() + p.w2_offset();
    const double* b2 = p.theta.data() + p.b2_offset();
    std::vector<double> out(static_cast<std::size_t>(cfg.vocab_size));
    for (int v = 0; v < cfg.vocab_size; ++v) {
        double acc = b2[v];
        for (int j = 0; j < cfg.hidden_dim; ++j) acc += hidden[j] * w2[std::size_t(j) * cfg.vocab_size + v];
        out[v] = acc;
    }
    return out;
}

// log softmax(z / temperature) with max-subtraction.
inline std::vector<double> log_softmax(std::vector<double> z, double temperature) {
    for (double& v : z) v /= temperature;
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - m);
    const double lse = m + std::log(sum);
    for (double& v : z) v -= lse;
    return z;
}

inline std::vector<double> token_logprobs(const PolicyParams& p, std::span<const int> context,
                                          double temperature) {
    return log_softmax(logits(p, context), temperature);
}

inline double logprob_token(const PolicyParams& p, std::span<const int> context, int token,
                            double temperature) {
    if (token < 0 || token >= p.cfg.vocab_size) throw std::out_of_range("token id out of range");
    return token_logprobs(p, context, temperature)[static_cast<std::size_t>(token)];
}

// ---------------------------------------------------------------------------
// Exact reverse-mode gradient of logprob_token
// ---------------------------------------------------------------------------

// Accumulates coeff * d logprob(token | context) / d theta into grad.
inline void accumulate_grad_logprob(const PolicyParams& p, std::span<const int> context, int token,
                                    double temperature, double coeff, std::vector<double>& grad) {
    const auto& cfg = p.cfg;
    if (grad.size() != p.theta.size()) throw std::invalid_argument("gradient shape mismatch");
    if (token < 0 || token >= cfg.vocab_size) throw std::out_of_range("token id out of range");

    // Forward, keeping intermediates.
    const std::vector<double> x = pool_context(p, context);
    const double* w1 = p.theta.data() + p.w1_offset();
    const double* b1 = p.theta.data() + p.b1_offset();
    std::vector<double> hidden(static_cast<std::size_t>(cfg.hidden_dim));
    for (int j = 0; j < cfg.hidden_dim; ++j) {
        double acc = b1[j];
        for (int a = 0; a < cfg.embed_dim; ++a) acc += x[a] * w1[std::size_t(a) * cfg.hidden_dim + j];
        hidden[j] = std::tanh(acc);
    }
    const double* w2 = p.theta.data() + p.w2_offset();
    const double* b2 = p.theta.data() + p.b2_offset();
    std::vector<double> z(static_cast<std::size_t>(cfg.vocab_size));
    for (int v = 0; v < cfg.vocab_size; ++v) {
        double acc = b2[v];
        for (int j = 0; j < cfg.hidden_dim; ++j) acc += hidden[j] * w2[std::size_t(j) * cfg.vocab_size + v];
        z[v] = acc;
    }
    const std::vector<double> logp = log_softmax(z, temperature);

    // d logp[token] / d z_v = (1[v==token] - softmax(z/T)_v) / T
    std::vector<double> dz(static_cast<std::size_t>(cfg.vocab_size));
    for (int v = 0; v < cfg.vocab_size; ++v) {
        const double indicator = (v == token) ? 1.0 : 0.0;
        dz[v] = coeff * (indicator - std::exp(logp[v])) / temperature;
    }

    double* gw2 = grad.data() + p.w2_offset();
    double* gb2 = grad.data() + p.b2_offset();
    std::vector<double> dhidden(static_cast<std::size_t>(cfg.hidden_dim), 0.0);
    for (int v = 0; v < cfg.vocab_size; ++v) {
        gb2[v] += dz[v];
        for (int j = 0; j < cfg.hidden_dim; ++j) {
            gw2[std::size_t(j) * cfg.vocab_size + v] += hidden[j] * dz[v];
            dhidden[j] += w2[std::size_t(j) * cfg.vocab_size + v] * dz[v];
        }
    }

    double* gw1 = grad.data() + p.w1_offset();
    double* gb1 = grad.data() + p.b1_offset();
    std::vector<double> dx(static_cast<std::size_t>(cfg.embed_dim), 0.0);
    for (int j = 0; j < cfg.hidden_dim; ++j) {
        const double dpre = dhidden[j] * (1.0 - hidden[j] * hidden[j]);
        gb1[j] += dpre;
        for (int a = 0; a < cfg.embed_dim; ++a) {
            gw1[std::size_t(a) * cfg.hidden_dim + j] += x[a] * dpre;
            dx[a] += w1[std::size_t(a) * cfg.hidden_dim + j] * dpre;
        }
    }

    const std::size_t take = std::min<std::size_t>(context.size(), cfg.context_window);
    if (take > 0) {
        const double inv = 1.0 / static_cast<double>(take);
        for (std::size_t c = context.size() - take; c < context.size(); ++c) {
            double* grow = grad.data() + std::size_t(context[c]) * cfg.embed_dim;
            for (int a = 0; a < cfg.embed_dim; ++a) grow[a] += dx[a] * inv;
        }
    }
}

inline std::vector<double> grad_logprob(const PolicyParams& p, std::span<const int> context,
                                        int token, double temperature) {
    std::vector<double> grad(p.theta.size(), 0.0);
    accumulate_grad_logprob(p, context, token, temperature, 1.0, grad);
    return grad;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

// One sampled response with its sampling-time log-probabilities.
struct Rollout {
    std::vector<int> prompt_tokens;
    std::vector<int> output_tokens;
    std::vector<double> sample_logprobs;
    bool truncated = false;
};

namespace detail {
inline int sample_from_logprobs(const std::vector<double>& logp, double u) {
    double cum = 0.0;
    for (std::size_t v = 0; v < logp.size(); ++v) {
        cum += std::exp(logp[v]);
        if (u < cum) return static_cast<int>(v);
    }
    return static_cast<int>(logp.size()) - 1;  // rounding tail
}
}  // namespace detail

inline Rollout sample_rollout(const PolicyParams& p, std::span<const int> prompt_tokens,
                              std::uint64_t rollout_seed) {
    Rollout r;
    r.prompt_tokens.assign(prompt_tokens.begin(), prompt_tokens.end());
    Rng rng(rollout_seed);
    std::vector<int> context = r.prompt_tokens;
    while (static_cast<int>(r.output_tokens.size()) < p.cfg.max_len) {
        const std::vector<double> logp = token_logprobs(p, context, p.cfg.temperature);
        const int tok = detail::sample_from_logprobs(logp, rng.uniform());
        r.output_tokens.push_back(tok);
        r.sample_logprobs.push_back(logp[static_cast<std::size_t>(tok)]);
        if (tok == Vocab::kEos) return r;
        context.push_back(tok);
    }
    r.truncated = true;
    return r;
}

// G independent rollouts; rollout i is a pure function of
// (theta, prompt, master_seed, prompt_id, i), so execution order cannot
// change results and groups may be sampled concurrently.
inline std::vector<Rollout> sample_group(const PolicyParams& p, std::span<const int> prompt_tokens,
                                         int group_size, std::uint64_t master_seed,
                                         std::string_view prompt_id = {}) {
    if (group_size < 1) throw std::invalid_argument("group size must be >= 1");
    std::vector<Rollout> rollouts;
    rollouts.reserve(static_cast<std::size_t>(group_size));
    const std::uint64_t prompt_hash = fnv1a64(prompt_id);
    for (int i = 0; i < group_size; ++i) {
        rollouts.push_back(sample_rollout(
            p, prompt_tokens, mix_seed(master_seed, prompt_hash, static_cast<std::uint64_t>(i))));
    }
    return rollouts;
}

// Argmax decoding; the deterministic evaluation analogue of sampling.
inline Rollout greedy_decode(const PolicyParams& p, std::span<const int> prompt_tokens) {
    Rollout r;
    r.prompt_tokens.assign(prompt_tokens.begin(), prompt_tokens.end());
    std::vector<int> context = r.prompt_tokens;
    while (static_cast<int>(r.output_tokens.size()) < p.cfg.max_len) {
        const std::vector<double> logp = token_logprobs(p, context, p.cfg.temperature);
        const int tok = static_cast<int>(
            std::max_element(logp.begin(), logp.end()) - logp.begin());
        r.output_tokens.push_back(tok);
        r.sample_logprobs.push_back(logp[static_cast<std::size_t>(tok)]);
        if (tok == Vocab::kEos) return r;
        context.push_back(tok);
    }
    r.truncated = true;
    return r;
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamConfig {
    double learning_rate = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t t = 0;
};

// One Adam step ascending the objective whose gradient is `grad`.
inline void apply_update(PolicyParams& params, std::span<const double> grad, AdamState& state,
                         const AdamConfig& cfg) {
    if (grad.size() != params.theta.size()) {
        throw std::invalid_argument("apply_update: gradient shape mismatch");
    }
    if (state.m.empty()) {
        state.m.assign(params.theta.size(), 0.0);
        state.v.assign(params.theta.size(), 0.0);
    }
    if (state.m.size() != params.theta.size()) {
        throw std::invalid_argument("apply_update: optimizer state shape mismatch");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < grad.size(); ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params.theta[i] += cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

struct Checkpoint {
    PolicyConfig cfg;
    std::vector<double> theta;
    AdamState adam;
    std::int64_t step = 0;
};

inline json policy_config_to_json(const PolicyConfig& c) {
    return json{{"vocab_size", c.vocab_size},
                {"embed_dim", c.embed_dim},
                {"hidden_dim", c.hidden_dim},
                {"context_window", c.context_window},
                {"max_len", c.max_len},
                {"temperature", c.temperature},
                {"init_scale", c.init_scale},
                {"seed", c.seed}};
}

inline PolicyConfig policy_config_from_json(const json& j) {
    PolicyConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.context_window = j.at("context_window").get<int>();
    c.max_len = j.at("max_len").get<int>();
    c.temperature = j.at("temperature").get<double>();
    c.init_scale = j.at("init_scale").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

// JSON checkpoint; doubles survive bitwise because the serializer emits
// shortest-round-trip decimal forms.
inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    json j;
    j["version"] = 1;
    j["policy"] = policy_config_to_json(ckpt.cfg);
    j["theta"] = ckpt.theta;
    j["adam"] = {{"t", ckpt.adam.t}, {"m", ckpt.adam.m}, {"v", ckpt.adam.v}};
    j["step"] = ckpt.step;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out << j.dump() << '\n';
    if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("corrupt checkpoint " + path.string() + ": " + e.what());
    }
    if (j.value("version", 0) != 1) {
        throw std::runtime_error("unsupported checkpoint version in " + path.string());
    }
    Checkpoint ckpt;
    ckpt.cfg = policy_config_from_json(j.at("policy"));
    ckpt.theta = j.at("theta").get<std::vector<double>>();
    ckpt.adam.t = j.at("adam").at("t").get<std::int64_t>();
    ckpt.adam.m = j.at("adam").at("m").get<std::vector<double>>();
    ckpt.adam.v = j.at("adam").at("v").get<std::vector<double>>();
    ckpt.step = j.at("step").get<std::int64_t>();
    if (ckpt.theta.size() != ckpt.cfg.param_count()) {
        throw std::runtime_error("checkpoint theta size does not match its config");
    }
    return ckpt;
}

}  // namespace driverl
