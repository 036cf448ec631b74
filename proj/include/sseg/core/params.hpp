#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "sseg/core/config.hpp"
#include "sseg/core/errors.hpp"

namespace sseg {

/// Typed, consumption-tracking view over the parameters of one config mapping.
///
/// Constructors read what they need through `get`/`require`; `finish()` then rejects any key
/// nobody read, so a typo in a config fails loudly instead of being ignored.
class Params {
 public:
  Params(ConfigNode node, std::string context);

  const std::string& context() const { return context_; }
  const ConfigNode& node() const { return node_; }

  bool has(const std::string& key) const;

  /// True when the key is absent or explicitly null. Marks the key as consumed.
  bool is_null(const std::string& key);

  template <typename T>
  T require(const std::string& key) {
    consumed_.insert(key);
    if (!has(key) || node_.at(key).is_null()) {
      fail(ErrorCode::InvalidParams, context_ + ": missing required parameter '" + key + "'");
    }
    return convert<T>(key, node_.at(key));
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    consumed_.insert(key);
    if (!has(key) || node_.at(key).is_null()) return fallback;
    return convert<T>(key, node_.at(key));
  }

  /// Raw sub-node (null when absent).
  ConfigNode get_node(const std::string& key);

  /// Throws InvalidParams listing every key that was never read.
  void finish() const;

 private:
  template <typename T>
  T convert(const std::string& key, const ConfigNode& value) const {
    try {
      if constexpr (std::is_same_v<T, double> || std::is_same_v<T, float>) {
        if (!value.is_number()) throw std::invalid_argument("not a number");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!value.is_number_integer()) throw std::invalid_argument("not an integer");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!value.is_boolean()) throw std::invalid_argument("not a boolean");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!value.is_string()) throw std::invalid_argument("not a string");
      }
      return value.get<T>();
    } catch (const std::exception& e) {
      fail(ErrorCode::InvalidParams,
           context_ + ": parameter '" + key + "' has the wrong type (" + e.what() + ")");
    }
  }

  ConfigNode node_;
  std::string context_;
  mutable std::set<std::string> consumed_;
};

}  // namespace sseg
