#pragma once

#include <filesystem>
#include <string>

#include <doctest.h>

namespace reina::test {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(REINA_FIXTURE_DIR) / name; }

// Fresh scratch directory per test case.
inline std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::path(REINA_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace reina::test
