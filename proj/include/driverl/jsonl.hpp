// Copyright 2026 the driverl authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace driverl {

using json = nlohmann::json;

// Parses a JSONL file line by line; blank lines are skipped. The callback
// receives the 1-based line number. Parse failures name the file and line.
inline void for_each_jsonl_line(const std::filesystem::path& path,
                                const std::function<void(int, const json&)>& fn) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": malformed JSON: " + e.what());
        }
        fn(line_no, j);
    }
}

inline void require_key(const json& j, const std::string& key,
                        const std::string& where) {
    if (!j.contains(key)) {
        throw std::runtime_error(where + ": missing field '" + key + "'");
    }
}

}  // namespace driverl
