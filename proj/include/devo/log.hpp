#pragma once

#include <spdlog/spdlog.h>

namespace devo {

/// Applies the level named by DEVO_LOG (trace, debug, info, warn, error, off).
/// Defaults to warn.
void init_logging_from_env();

}  // namespace devo

#define DEVO_LOG_DEBUG(...) SPDLOG_DEBUG(__VA_ARGS__)
#define DEVO_LOG_INFO(...) spdlog::info(__VA_ARGS__)
#define DEVO_LOG_WARN(...) spdlog::warn(__VA_ARGS__)
#define DEVO_LOG_ERROR(...) spdlog::error(__VA_ARGS__)
