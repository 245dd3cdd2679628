#ifndef MASKFUSE_LOG_HPP_
#define MASKFUSE_LOG_HPP_

#include <memory>
#include <string_view>

#include <spdlog/spdlog.h>

namespace maskfuse {

// Shared stderr logger. Initial level comes from MASKFUSE_LOG
// (trace|debug|info|warn|error|off), default warn.
spdlog::logger& Log();

// Returns false if the level name is unknown.
bool SetLogLevel(std::string_view level);

}  // namespace maskfuse

#endif  // MASKFUSE_LOG_HPP_
