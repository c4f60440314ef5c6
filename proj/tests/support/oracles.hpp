// Copyright 2026 the driverl authors
// SPDX-License-Identifier: Apache-2.0

// Independent reference implementations used only by tests. Each one
// recomputes a quantity by the most literal route available so the library
// implementations have something honest to disagree with.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <driverl/dataset.hpp>
#include <driverl/types.hpp>

namespace oracles {

// Frame difficulty by literal nested loops: average the samples of one
// model, average the models of one question, average the questions.
inline double brute_force_frame_score(const driverl::Frame& frame,
                                      const driverl::SampleScoreTable& table) {
    std::vector<double> question_means;
    for (const auto& q : frame.questions) {
        std::vector<double> model_means;
        for (const auto& model : table.model_ids()) {
            std::vector<double> samples;
            for (int k = 0; k < table.samples_per_model(); ++k) {
                samples.push_back(table.get(q.question_id, model, k));
            }
            double sum = 0.0;
            for (double s : samples) sum += s;
            model_means.push_back(sum / static_cast<double>(samples.size()));
        }
        double sum = 0.0;
        for (double m : model_means) sum += m;
        question_means.push_back(sum / static_cast<double>(model_means.size()));
    }
    double sum = 0.0;
    for (double m : question_means) sum += m;
    return sum / static_cast<double>(question_means.size());
}

inline std::pair<double, double> naive_mean_population_std(std::span<const double> xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    return {mean, std::sqrt(var)};
}

// n-gram repeat fraction by explicit enumeration into a multiset.
inline double brute_force_ngram_ratio(const std::vector<int>& tokens, int n) {
    if (static_cast<int>(tokens.size()) < n) return 0.0;
    std::set<std::vector<int>> distinct;
    int total = 0;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        distinct.insert(std::vector<int>(tokens.begin() + i, tokens.begin() + i + n));
        ++total;
    }
    return 1.0 - static_cast<double>(distinct.size()) / static_cast<double>(total);
}

// Bag-overlap F1 via sorted-vector multiset intersection.
inline double brute_force_bag_f1(std::string_view a, std::string_view b) {
    auto words = [](std::string_view text) {
        std::vector<std::string> out;
        std::string current;
        for (char c : text) {
            if (std::isspace(static_cast<unsigned char>(c))) {
                if (!current.empty()) out.push_back(std::move(current));
                current.clear();
            } else {
                current += c;
            }
        }
        if (!current.empty()) out.push_back(std::move(current));
        std::sort(out.begin(), out.end());
        return out;
    };
    const auto wa = words(a);
    const auto wb = words(b);
    if (wa.empty() && wb.empty()) return 1.0;
    if (wa.empty() || wb.empty()) return 0.0;
    std::vector<std::string> common;
    std::set_intersection(wa.begin(), wa.end(), wb.begin(), wb.end(), std::back_inserter(common));
    if (common.empty()) return 0.0;
    const double p = static_cast<double>(common.size()) / static_cast<double>(wb.size());
    const double r = static_cast<double>(common.size()) / static_cast<double>(wa.size());
    return 2.0 * p * r / (p + r);
}

inline double brute_force_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
        sxy += x[i] * y[i];
    }
    const double cov = sxy - sx * sy / n;
    const double vx = sxx - sx * sx / n;
    const double vy = syy - sy * sy / n;
    return cov / std::sqrt(vx * vy);
}

// Central finite difference of f along coordinate idx of theta.
inline double central_difference(const std::function<double(const std::vector<double>&)>& f,
                                 std::vector<double> theta, std::size_t idx, double step) {
    theta[idx] += step;
    const double hi = f(theta);
    theta[idx] -= 2.0 * step;
    const double lo = f(theta);
    return (hi - lo) / (2.0 * step);
}

// Two-branch gradient comparison: relative error on meaningful coordinates,
// absolute agreement on near-zero ones.
inline bool gradients_match(double analytic, double numeric, double rel_tol = 1e-4,
                            double zero_band = 1e-6, double abs_tol = 1e-7,
                            double* rel_out = nullptr) {
    const double mag = std::max(std::abs(analytic), std::abs(numeric));
    if (mag < zero_band) return std::abs(analytic - numeric) < abs_tol;
    const double rel = std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric));
    if (rel_out) *rel_out = rel;
    return rel < rel_tol;
}

}  // namespace oracles
