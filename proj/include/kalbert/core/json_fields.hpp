// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "kalbert/core/error.hpp"

namespace kalbert {

/// Reads optional fields out of a JSON object and rejects any key that was
/// never asked for.
class JsonFields {
 public:
  JsonFields(const nlohmann::json& object, std::string section) : object_(object), section_(std::move(section)) {
    if (!object_.is_object()) fail(ErrorCode::InvalidConfig, section_ + " must be a JSON object");
  }

  template <typename V>
  void read(const std::string& key, V& out) {
    seen_.insert(key);
    const auto it = object_.find(key);
    if (it == object_.end()) return;
    try {
      out = it->template get<V>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::InvalidConfig, section_ + "." + key + ": " + e.what());
    }
  }

  /// Sub-object for a nested section, or an empty object when absent.
  const nlohmann::json& child(const std::string& key) {
    seen_.insert(key);
    const auto it = object_.find(key);
    return it == object_.end() ? empty() : *it;
  }

  void finish() const {
    for (const auto& [key, value] : object_.items()) {
      if (!seen_.contains(key)) fail(ErrorCode::InvalidConfig, "unknown key '" + section_ + "." + key + "'");
    }
  }

 private:
  static const nlohmann::json& empty() {
    static const nlohmann::json kEmpty = nlohmann::json::object();
    return kEmpty;
  }

  const nlohmann::json& object_;
  std::string section_;
  std::set<std::string> seen_;
};

}  // namespace kalbert
