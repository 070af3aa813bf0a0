#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace tipping {

// Verbosity from the TIPPING_RD_LOG environment variable:
// unset/0 quiet, "info"/1 progress notes, "debug"/2 solver internals.
inline int log_level() {
  static const int level = [] {
    const char* env = std::getenv("TIPPING_RD_LOG");
    if (env == nullptr) return 0;
    if (std::strcmp(env, "debug") == 0 || std::strcmp(env, "2") == 0) return 2;
    if (std::strcmp(env, "info") == 0 || std::strcmp(env, "1") == 0) return 1;
    return 0;
  }();
  return level;
}

inline void log_info(const std::string& msg) {
  if (log_level() >= 1) std::fprintf(stderr, "[tipping-rd] %s\n", msg.c_str());
}

inline void log_debug(const std::string& msg) {
  if (log_level() >= 2) std::fprintf(stderr, "[tipping-rd:debug] %s\n", msg.c_str());
}

}  // namespace tipping
