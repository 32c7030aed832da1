#pragma once

// Reader for the TOML subset used by experiment configs: comments, [table]
// headers (dotted names allowed), bare or quoted keys, basic and literal
// strings, integers, floats, booleans and (possibly multi-line, nested)
// arrays. Inline tables, dates and multi-line strings are rejected.

#include <json.hpp>

#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>

#include "leakscope/error.hpp"

namespace leakscope {

class TomlReader {
 public:
  explicit TomlReader(std::string_view text) : text_(text) {}

  nlohmann::json parse() {
    nlohmann::json root = nlohmann::json::object();
    nlohmann::json* table = &root;
    while (true) {
      skip_blank_lines();
      if (at_end()) break;
      if (peek() == '[') {
        ++pos_;
        skip_inline_space();
        table = &root;
        while (true) {
          const std::string name = parse_key();
          auto& next = (*table)[name];
          if (next.is_null()) next = nlohmann::json::object();
          if (!next.is_object()) fail("'" + name + "' is not a table");
          table = &next;
          skip_inline_space();
          if (peek() == '.') {
            ++pos_;
            skip_inline_space();
            continue;
          }
          break;
        }
        expect(']');
      } else {
        const std::string key = parse_key();
        skip_inline_space();
        expect('=');
        skip_inline_space();
        if (table->contains(key)) fail("duplicate key '" + key + "'");
        (*table)[key] = parse_value();
      }
      end_of_line();
    }
    return root;
  }

 private:
  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }

  [[noreturn]] void fail(const std::string& what) const {
    std::size_t line = 1;
    for (std::size_t i = 0; i < pos_ && i < text_.size(); ++i) line += text_[i] == '\n';
    throw InvalidArgument("config line " + std::to_string(line) + ": " + what);
  }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void skip_inline_space() {
    while (!at_end() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }

  void skip_comment() {
    if (peek() == '#') {
      while (!at_end() && peek() != '\n') ++pos_;
    }
  }

  void skip_blank_lines() {
    while (!at_end()) {
      skip_inline_space();
      skip_comment();
      if (peek() == '\r' || peek() == '\n') {
        ++pos_;
      } else {
        break;
      }
    }
  }

  // Whitespace, comments and newlines inside arrays.
  void skip_array_space() {
    while (!at_end()) {
      skip_inline_space();
      skip_comment();
      if (peek() == '\r' || peek() == '\n') {
        ++pos_;
      } else {
        break;
      }
    }
  }

  void end_of_line() {
    skip_inline_space();
    skip_comment();
    if (at_end()) return;
    if (peek() == '\r') ++pos_;
    if (peek() != '\n') fail("unexpected trailing characters");
    ++pos_;
  }

  std::string parse_key() {
    if (peek() == '"') return parse_basic_string();
    if (peek() == '\'') return parse_literal_string();
    const std::size_t start = pos_;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-')) ++pos_;
    if (pos_ == start) fail("expected a key");
    return std::string(text_.substr(start, pos_ - start));
  }

  std::string parse_basic_string() {
    expect('"');
    std::string out;
    while (true) {
      if (at_end() || peek() == '\n') fail("unterminated string");
      const char c = text_[pos_++];
      if (c == '"') break;
      if (c != '\\') {
        out.push_back(c);
        continue;
      }
      if (at_end()) fail("unterminated escape");
      const char e = text_[pos_++];
      switch (e) {
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case 'r': out.push_back('\r'); break;
        default: fail(std::string("unsupported escape \\") + e);
      }
    }
    return out;
  }

  std::string parse_literal_string() {
    expect('\'');
    const std::size_t start = pos_;
    while (!at_end() && peek() != '\'' && peek() != '\n') ++pos_;
    if (peek() != '\'') fail("unterminated string");
    std::string out(text_.substr(start, pos_ - start));
    ++pos_;
    return out;
  }

  nlohmann::json parse_value() {
    const char c = peek();
    if (c == '"') return parse_basic_string();
    if (c == '\'') return parse_literal_string();
    if (c == '[') return parse_array();
    if (c == '{') fail("inline tables are not supported");
    if (text_.substr(pos_, 4) == "true") {
      pos_ += 4;
      return true;
    }
    if (text_.substr(pos_, 5) == "false") {
      pos_ += 5;
      return false;
    }
    return parse_number();
  }

  nlohmann::json parse_array() {
    expect('[');
    nlohmann::json arr = nlohmann::json::array();
    while (true) {
      skip_array_space();
      if (peek() == ']') {
        ++pos_;
        return arr;
      }
      arr.push_back(parse_value());
      skip_array_space();
      if (peek() == ',') {
        ++pos_;
      } else if (peek() != ']') {
        fail("expected ',' or ']' in array");
      }
    }
  }

  nlohmann::json parse_number() {
    const std::size_t start = pos_;
    std::string digits;
    bool is_float = false;
    while (!at_end()) {
      const char c = peek();
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '+' || c == '-') {
        digits.push_back(c);
      } else if (c == '.' || c == 'e' || c == 'E') {
        digits.push_back(c);
        is_float = true;
      } else if (c == '_') {
        // digit separator
      } else {
        break;
      }
      ++pos_;
    }
    if (digits.empty()) {
      pos_ = start;
      fail("expected a value");
    }
    try {
      std::size_t used = 0;
      if (is_float) {
        const double v = std::stod(digits, &used);
        if (used != digits.size()) fail("malformed number '" + digits + "'");
        return v;
      }
      if (digits[0] == '-') {
        const long long v = std::stoll(digits, &used);
        if (used != digits.size()) fail("malformed number '" + digits + "'");
        return v;
      }
      const unsigned long long v = std::stoull(digits, &used);
      if (used != digits.size()) fail("malformed number '" + digits + "'");
      return static_cast<std::uint64_t>(v);
    } catch (const std::logic_error&) {
      fail("malformed number '" + digits + "'");
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

inline nlohmann::json parse_toml_subset(std::string_view text) { return TomlReader(text).parse(); }

}  // namespace leakscope
