#pragma once

#include <string>

#include "citysim/city_io.hpp"
#include "citysim/error.hpp"

namespace citysim::detail {

[[noreturn]] inline void schema_fail(const std::string& what) { throw Error(ErrorCode::schema_error, what); }

inline const Json& field(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) schema_fail(std::string("missing field '") + key + "'");
  return *it;
}

template <class T>
T get(const Json& j, const char* key) {
  try {
    return field(j, key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    schema_fail(std::string("bad field '") + key + "': " + e.what());
  }
}

template <class T>
void read_opt(const Json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    schema_fail(std::string("bad field '") + key + "': " + e.what());
  }
}

}  // namespace citysim::detail
