// SPDX-License-Identifier: Apache-2.0
#include "quarc/toml.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace quarc::minitoml {

const std::string& Value::as_string() const {
    if (kind != Kind::String) throw FormatError("toml: value is not a string");
    return str;
}

double Value::as_number() const {
    if (kind != Kind::Number) throw FormatError("toml: value is not a number");
    return num;
}

long long Value::as_int() const {
    const double v = as_number();
    const long long i = static_cast<long long>(v);
    if (double(i) != v) throw FormatError("toml: expected an integer, got " + std::to_string(v));
    return i;
}

bool Value::as_bool() const {
    if (kind != Kind::Boolean) throw FormatError("toml: value is not a boolean");
    return boolean;
}

const std::vector<Value>& Value::as_array() const {
    if (kind != Kind::Array) throw FormatError("toml: value is not an array");
    return array;
}

bool Document::has(const std::string& section, const std::string& key) const {
    return find(section, key) != nullptr;
}

const Value* Document::find(const std::string& section, const std::string& key) const {
    auto s = sections.find(section);
    if (s == sections.end()) return nullptr;
    auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
}

const Value& Document::at(const std::string& section, const std::string& key) const {
    const Value* v = find(section, key);
    if (!v) throw FormatError("toml: missing key [" + section + "] " + key);
    return *v;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

// strips a trailing comment, respecting quoted strings
std::string strip_comment(const std::string& line) {
    bool in_str = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_str = !in_str;
        if (line[i] == '#' && !in_str) return line.substr(0, i);
    }
    return line;
}

class ValueParser {
public:
    ValueParser(const std::string& text, std::size_t line_no) : s_(text), line_(line_no) {}

    Value parse() {
        Value v = parse_one();
        skip_ws();
        if (pos_ != s_.size()) fail("trailing characters after value");
        return v;
    }

private:
    const std::string& s_;
    std::size_t pos_ = 0;
    std::size_t line_;

    [[noreturn]] void fail(const std::string& msg) const {
        throw FormatError("toml line " + std::to_string(line_) + ": " + msg);
    }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    Value parse_one() {
        skip_ws();
        if (pos_ >= s_.size()) fail("missing value");
        const char c = s_[pos_];
        if (c == '"') return parse_string();
        if (c == '[') return parse_array();
        if (std::isalpha(static_cast<unsigned char>(c))) return parse_bool();
        return parse_number();
    }

    Value parse_string() {
        ++pos_;  // opening quote
        std::string out;
        while (pos_ < s_.size() && s_[pos_] != '"') out.push_back(s_[pos_++]);
        if (pos_ >= s_.size()) fail("unterminated string");
        ++pos_;
        Value v;
        v.kind = Value::Kind::String;
        v.str = std::move(out);
        return v;
    }

    Value parse_bool() {
        if (s_.compare(pos_, 4, "true") == 0) {
            pos_ += 4;
            Value v;
            v.kind = Value::Kind::Boolean;
            v.boolean = true;
            return v;
        }
        if (s_.compare(pos_, 5, "false") == 0) {
            pos_ += 5;
            Value v;
            v.kind = Value::Kind::Boolean;
            v.boolean = false;
            return v;
        }
        fail("expected true/false");
    }

    Value parse_number() {
        const std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) ||
                                    s_[pos_] == '+' || s_[pos_] == '-' || s_[pos_] == '.' ||
                                    s_[pos_] == 'e' || s_[pos_] == 'E' || s_[pos_] == '_'))
            ++pos_;
        std::string tok = s_.substr(start, pos_ - start);
        std::erase(tok, '_');
        if (tok.empty()) fail("expected a number");
        try {
            std::size_t used = 0;
            const double d = std::stod(tok, &used);
            if (used != tok.size()) fail("bad number '" + tok + "'");
            Value v;
            v.kind = Value::Kind::Number;
            v.num = d;
            return v;
        } catch (const std::exception&) {
            fail("bad number '" + tok + "'");
        }
    }

    Value parse_array() {
        ++pos_;  // '['
        Value v;
        v.kind = Value::Kind::Array;
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == ']') {
            ++pos_;
            return v;
        }
        while (true) {
            v.array.push_back(parse_one());
            skip_ws();
            if (pos_ >= s_.size()) fail("unterminated array");
            if (s_[pos_] == ',') {
                ++pos_;
                continue;
            }
            if (s_[pos_] == ']') {
                ++pos_;
                return v;
            }
            fail("expected ',' or ']' in array");
        }
    }
};

bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
    }
    return true;
}

}  // namespace

Document parse(const std::string& text) {
    Document doc;
    std::string section;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']')
                throw FormatError("toml line " + std::to_string(line_no) + ": bad section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!valid_key(section))
                throw FormatError("toml line " + std::to_string(line_no) + ": bad section name '" +
                                  section + "'");
            doc.sections[section];  // sections may be empty
            continue;
        }

        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("toml line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (!valid_key(key))
            throw FormatError("toml line " + std::to_string(line_no) + ": bad key '" + key + "'");
        if (doc.sections[section].count(key))
            throw FormatError("toml line " + std::to_string(line_no) + ": duplicate key '" + key +
                              "'");
        doc.sections[section][key] = ValueParser(trim(line.substr(eq + 1)), line_no).parse();
    }
    return doc;
}

Document parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("toml: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

}  // namespace quarc::minitoml
