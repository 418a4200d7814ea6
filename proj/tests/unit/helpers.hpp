#pragma once

#include <filesystem>
#include <string>

#include "doctest.h"
#include "ionguide/error.hpp"

#define CHECK_ERROR(expr, want_kind, want_code)                   \
  do {                                                            \
    bool thrown_ = false;                                         \
    try {                                                         \
      (void)(expr);                                               \
    } catch (const ionguide::Error& e_) {                         \
      thrown_ = true;                                             \
      CHECK(e_.kind() == (want_kind));                            \
      CHECK(e_.code() == std::string(want_code));                 \
    }                                                             \
    CHECK_MESSAGE(thrown_, "expected " << (want_code));           \
  } while (0)

// Fresh directory under the system temp dir, removed on scope exit.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() / ("ionguide_test_" + tag);
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};
