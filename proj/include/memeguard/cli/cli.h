#pragma once

#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "memeguard/gateway/transport.h"

namespace memeguard::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitExternal = 2;

// What a CLI run talks to. The defaults are the real network and the
// process streams; tests swap in a stub transport and string streams.
struct Environment {
  std::function<std::shared_ptr<gateway::Transport>()> transport;
  std::ostream* out = &std::cout;
  std::ostream* err = &std::cerr;
};

// Parses `args` (without the program name) and runs the subcommand.
// Returns 0, 1 (usage or validation error) or 2 (external service failure).
int Run(const std::vector<std::string>& args, const Environment& env = {});

}  // namespace memeguard::cli
