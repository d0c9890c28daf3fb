#include "devo/log.hpp"

#include <cstdlib>
#include <string>

namespace devo {

void init_logging_from_env() {
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("DEVO_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only honor the literal "off".
    if (level != spdlog::level::off || std::string(env) == "off") spdlog::set_level(level);
  }
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
}

}  // namespace devo
