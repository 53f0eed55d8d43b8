#pragma once

#include <iostream>
#include <string>

namespace saml {

inline bool& log_quiet() {
  static bool quiet = false;
  return quiet;
}

inline void log_warn(const std::string& msg) {
  if (!log_quiet()) std::cerr << "[warn] " << msg << "\n";
}

inline void log_info(const std::string& msg) {
  if (!log_quiet()) std::cerr << "[info] " << msg << "\n";
}

}  // namespace saml
