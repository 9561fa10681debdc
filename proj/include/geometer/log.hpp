#pragma once

#include <spdlog/spdlog.h>

namespace geometer {

/// Library logger writing to stderr. The level comes from GEOMETER_LOG
/// (trace|debug|info|warn|error|off); default is warn.
spdlog::logger& logger();

/// Re-reads GEOMETER_LOG.
void configure_logging_from_env();

}  // namespace geometer
