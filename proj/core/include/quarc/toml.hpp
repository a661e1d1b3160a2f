// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "quarc/common.hpp"

namespace quarc::minitoml {

/// Strict parser for the TOML subset the run configs use: [section]
/// headers, key = value pairs, "#" comments, and values that are basic
/// strings, integers, floats, booleans, or flat arrays of those.

struct Value {
    enum class Kind { String, Number, Boolean, Array };
    Kind kind = Kind::Number;
    std::string str;
    double num = 0;
    bool boolean = false;
    std::vector<Value> array;

    const std::string& as_string() const;
    double as_number() const;
    long long as_int() const;
    bool as_bool() const;
    const std::vector<Value>& as_array() const;
};

using Table = std::map<std::string, Value>;

struct Document {
    std::map<std::string, Table> sections;  // "" holds top-level keys

    bool has(const std::string& section, const std::string& key) const;
    const Value* find(const std::string& section, const std::string& key) const;
    const Value& at(const std::string& section, const std::string& key) const;
};

Document parse(const std::string& text);
Document parse_file(const std::string& path);

}  // namespace quarc::minitoml
