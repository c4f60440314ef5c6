// Copyright 2026 the driverl authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "driverl/judge.hpp"

namespace driverl {

struct HttpJudgeConfig {
    std::string url;                    // http://host[:port][/path]
    std::string model = "judge-model";
    double temperature = 0.0;
    int timeout_ms = 30000;
    int retries = 2;                    // additional attempts after the first
    int retry_backoff_ms = 100;
    int concurrency = 1;                // max in-flight requests
    std::string templates_dir;          // empty -> built-in rubrics
    std::string api_key_env = "JUDGE_API_KEY";
};

struct ParsedUrl {
    std::string host;
    int port = 80;
    std::string path = "/";
};

inline ParsedUrl parse_http_url(const std::string& url) {
    const std::string scheme = "http://";
    if (url.rfind("https://", 0) == 0) {
        throw std::runtime_error("https judge endpoints are not supported; use http");
    }
    if (url.rfind(scheme, 0) != 0) {
        throw std::runtime_error("judge url must start with http://: " + url);
    }
    ParsedUrl out;
    std::string rest = url.substr(scheme.size());
    const std::size_t slash = rest.find('/');
    std::string hostport = slash == std::string::npos ? rest : rest.substr(0, slash);
    if (slash != std::string::npos) out.path = rest.substr(slash);
    const std::size_t colon = hostport.find(':');
    if (colon == std::string::npos) {
        out.host = hostport;
    } else {
        out.host = hostport.substr(0, colon);
        out.port = std::stoi(hostport.substr(colon + 1));
    }
    if (out.host.empty()) throw std::runtime_error("judge url lacks a host: " + url);
    return out;
}

// Remote judge speaking a chat-completion-style protocol: POST
// {model, messages, temperature}; the reply's first text field is scanned
// for an integer in [0,100]. Requests are idempotent, so transport-level
// failures and 5xx replies are retried.
class HttpJudge : public Judge {
   public:
    explicit HttpJudge(HttpJudgeConfig cfg)
        : cfg_(std::move(cfg)),
          rubrics_(cfg_.templates_dir.empty() ? RubricSet::builtin()
                                              : RubricSet::load_dir(cfg_.templates_dir)),
          endpoint_(parse_http_url(cfg_.url)) {}

    double score(const JudgeRequest& req) override {
        const RenderedRubric rubric =
            rubrics_.route(req.task, req.question, req.reference_answer, req.response);
        json body;
        body["model"] = cfg_.model;
        body["messages"] = json::array({json{{"role", "user"}, {"content", rubric.text}}});
        body["temperature"] = cfg_.temperature;
        const std::string payload = body.dump();

        std::string last_error;
        for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
            if (attempt > 0 && cfg_.retry_backoff_ms > 0) {
                std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.retry_backoff_ms));
            }
            httplib::Client client(endpoint_.host, endpoint_.port);
            client.set_connection_timeout(0, cfg_.timeout_ms * 1000);
            client.set_read_timeout(0, cfg_.timeout_ms * 1000);
            httplib::Headers headers;
            if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key) {
                headers.emplace("Authorization", std::string("Bearer ") + key);
            }
            auto res = client.Post(endpoint_.path, headers, payload, "application/json");
            if (!res) {
                last_error = "transport failure: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status >= 500) {
                last_error = "server error: HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status < 200 || res->status >= 300) {
                throw std::runtime_error("judge request rejected: HTTP " +
                                         std::to_string(res->status) + ": " + res->body);
            }
            return parse_reply(res->body);
        }
        throw std::runtime_error("judge unreachable after " + std::to_string(cfg_.retries + 1) +
                                 " attempts: " + last_error);
    }

    std::string id() const override { return "http:" + cfg_.model; }

    // score() builds a fresh client per call and touches only immutable
    // members, so concurrent calls are safe.
    int max_concurrency() const override { return std::max(1, cfg_.concurrency); }

    static double parse_reply(const std::string& body) {
        json reply;
        try {
            reply = json::parse(body);
        } catch (const json::parse_error&) {
            throw std::runtime_error("judge reply is not JSON: " + body);
        }
        if (auto score = parse_score_json(reply)) return static_cast<double>(*score);
        throw std::runtime_error("judge reply has no score in [0,100]: " + body);
    }

   private:
    HttpJudgeConfig cfg_;
    RubricSet rubrics_;
    ParsedUrl endpoint_;
};

}  // namespace driverl
