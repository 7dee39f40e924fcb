/* Copyright 2026 The memfold Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Shared JSON helpers: enum name tables, strict object readers with field-path
// tracking, and the error types raised while reading on-disk documents.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace memfold {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

/// Base of every error raised while reading a model or config document.
class DocumentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed JSON. Carries the byte offset plus a 1-based line and column.
class SyntaxError : public DocumentError {
 public:
  SyntaxError(std::size_t byte_offset, std::size_t line, std::size_t column,
              const std::string& detail)
      : DocumentError("syntax error at line " + std::to_string(line) +
                      ", column " + std::to_string(column) + " (byte " +
                      std::to_string(byte_offset) + "): " + detail),
        byte_offset_(byte_offset),
        line_(line),
        column_(column) {}

  std::size_t byte_offset() const noexcept { return byte_offset_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t byte_offset_;
  std::size_t line_;
  std::size_t column_;
};

/// Well-formed JSON that does not match the document schema.
class SchemaError : public DocumentError {
 public:
  SchemaError(std::string path, const std::string& message)
      : DocumentError(path + ": " + message), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

struct Diagnostic {
  std::string path;
  std::string message;

  bool operator==(const Diagnostic&) const = default;
};

inline std::string to_string(const Diagnostic& d) {
  return d.path + ": " + d.message;
}

/// The document parsed but violates one or more invariants.
class ValidationError : public DocumentError {
 public:
  explicit ValidationError(std::vector<Diagnostic> diagnostics)
      : DocumentError(summarize(diagnostics)),
        diagnostics_(std::move(diagnostics)) {}

  const std::vector<Diagnostic>& diagnostics() const noexcept {
    return diagnostics_;
  }

 private:
  static std::string summarize(const std::vector<Diagnostic>& diagnostics) {
    std::string out = "validation failed";
    for (const auto& d : diagnostics) {
      out += "\n  " + to_string(d);
    }
    return out;
  }

  std::vector<Diagnostic> diagnostics_;
};

// Enum <-> string tables. Each enum used in a document specializes
// EnumNames with a names array indexed by the enumerator's value.
template <typename E>
struct EnumNames;

template <typename E>
constexpr std::string_view enum_name(E value) {
  return EnumNames<E>::names[static_cast<std::size_t>(value)];
}

template <typename E>
std::optional<E> enum_from_name(std::string_view name) {
  const auto& names = EnumNames<E>::names;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) {
      return static_cast<E>(i);
    }
  }
  return std::nullopt;
}

namespace detail {

inline Json parse_json_text(std::string_view text) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    // nlohmann reports the byte index one past the offending character.
    const std::size_t offset = e.byte == 0 ? 0 : e.byte - 1;
    std::size_t line = 1;
    std::size_t column = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    std::string detail = e.what();
    // Strip nlohmann's "[json.exception.parse_error.101] parse error at ..."
    // prefix down to the human-readable tail.
    if (auto pos = detail.find(": "); pos != std::string::npos) {
      detail = detail.substr(pos + 2);
    }
    throw SyntaxError(offset, line, column, detail);
  }
}

inline std::string index_path(const std::string& base, std::size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

inline std::string field_path(const std::string& base, std::string_view key) {
  if (base.empty()) {
    return std::string(key);
  }
  return base + "." + std::string(key);
}

// Reads fields of one JSON object, remembering which keys were consumed so
// that finish() can reject anything unexpected.
class ObjectReader {
 public:
  ObjectReader(const Json& object, std::string path)
      : object_(object), path_(std::move(path)) {
    if (!object_.is_object()) {
      throw SchemaError(display_path(), "expected an object");
    }
  }

  const std::string& path() const noexcept { return path_; }

  std::string child_path(std::string_view key) const {
    return field_path(path_, key);
  }

  bool has(std::string_view key) const {
    return object_.contains(std::string(key));
  }

  const Json* optional(std::string_view key) {
    const std::string k(key);
    seen_.insert(k);
    auto it = object_.find(k);
    return it == object_.end() ? nullptr : &*it;
  }

  const Json& required(std::string_view key) {
    const Json* value = optional(key);
    if (value == nullptr) {
      throw SchemaError(child_path(key), "required field is missing");
    }
    return *value;
  }

  std::string string(std::string_view key) {
    return as_string(required(key), child_path(key));
  }

  std::int64_t integer(std::string_view key) {
    return as_integer(required(key), child_path(key));
  }

  std::optional<std::int64_t> optional_integer(std::string_view key) {
    const Json* value = optional(key);
    if (value == nullptr) {
      return std::nullopt;
    }
    return as_integer(*value, child_path(key));
  }

  bool boolean(std::string_view key) {
    return as_boolean(required(key), child_path(key));
  }

  std::optional<bool> optional_boolean(std::string_view key) {
    const Json* value = optional(key);
    if (value == nullptr) {
      return std::nullopt;
    }
    return as_boolean(*value, child_path(key));
  }

  template <typename E>
  E enumeration(std::string_view key) {
    const std::string path = child_path(key);
    const std::string name = as_string(required(key), path);
    if (auto value = enum_from_name<E>(name)) {
      return *value;
    }
    std::string allowed;
    for (auto n : EnumNames<E>::names) {
      allowed += allowed.empty() ? "" : ", ";
      allowed += n;
    }
    throw SchemaError(path, "unknown value '" + name + "' (expected one of: " +
                                allowed + ")");
  }

  const Json& array(std::string_view key) {
    const Json& value = required(key);
    if (!value.is_array()) {
      throw SchemaError(child_path(key), "expected an array");
    }
    return value;
  }

  void finish() const {
    for (auto it = object_.begin(); it != object_.end(); ++it) {
      if (!seen_.contains(it.key())) {
        throw SchemaError(child_path(it.key()), "unknown field");
      }
    }
  }

  static std::string as_string(const Json& value, const std::string& path) {
    if (!value.is_string()) {
      throw SchemaError(path, "expected a string");
    }
    return value.get<std::string>();
  }

  static std::int64_t as_integer(const Json& value, const std::string& path) {
    if (value.is_number_unsigned()) {
      const auto u = value.get<std::uint64_t>();
      if (u > static_cast<std::uint64_t>(
                  std::numeric_limits<std::int64_t>::max())) {
        throw SchemaError(path, "integer out of range");
      }
      return static_cast<std::int64_t>(u);
    }
    if (value.is_number_integer()) {
      return value.get<std::int64_t>();
    }
    throw SchemaError(path, "expected an integer without fraction or exponent");
  }

  static bool as_boolean(const Json& value, const std::string& path) {
    if (!value.is_boolean()) {
      throw SchemaError(path, "expected a boolean");
    }
    return value.get<bool>();
  }

 private:
  std::string display_path() const { return path_.empty() ? "$" : path_; }

  const Json& object_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail
}  // namespace memfold
