#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "mvpt/error.h"

namespace mvpt {

// Reads named fields of a JSON object over existing defaults. Finish()
// rejects any key that was not named, so typos surface as kInvalidConfig.
class JsonFields {
 public:
  JsonFields(const nlohmann::json& j, std::string section)
      : j_(j), section_(std::move(section)) {
    if (!j.is_object()) Throw(ErrorKind::kInvalidConfig, section_ + " must be an object");
  }

  template <typename T>
  JsonFields& Read(const char* key, T& value) {
    seen_.insert(key);
    if (j_.contains(key)) {
      try {
        value = j_.at(key).get<T>();
      } catch (const nlohmann::json::exception& e) {
        Throw(ErrorKind::kInvalidConfig, Name(key) + ": " + e.what());
      }
    }
    return *this;
  }

  // Marks a key as known without reading it (nested sections).
  JsonFields& Allow(const char* key) {
    seen_.insert(key);
    return *this;
  }

  void Finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) {
        Throw(ErrorKind::kInvalidConfig, "unknown key " + Name(item.key()));
      }
    }
  }

  std::string Name(const std::string& key) const {
    return section_.empty() ? key : section_ + "." + key;
  }

 private:
  const nlohmann::json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

}  // namespace mvpt
