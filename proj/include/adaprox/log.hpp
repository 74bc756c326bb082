#pragma once

#include <functional>
#include <iostream>
#include <string>
#include <utility>

namespace adaprox {

using WarnHandler = std::function<void(const std::string&)>;

// Process-wide hook for non-fatal notices (degenerate inputs, fallbacks).
// Default prints to stderr; tests swap it in to capture messages.
inline WarnHandler& warn_handler() {
  static WarnHandler handler = [](const std::string& msg) {
    std::cerr << "[adaprox] warning: " << msg << '\n';
  };
  return handler;
}

inline void set_warn_handler(WarnHandler h) { warn_handler() = std::move(h); }

inline void warn(const std::string& msg) {
  const WarnHandler& h = warn_handler();
  if (h) h(msg);
}

}  // namespace adaprox
