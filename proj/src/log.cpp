#include "geometer/log.hpp"

#include <cstdlib>
#include <memory>

#include <spdlog/sinks/stdout_sinks.h>

namespace geometer {

namespace {

std::shared_ptr<spdlog::logger> make_logger() {
  auto sink = std::make_shared<spdlog::sinks::stderr_sink_mt>();
  auto log = std::make_shared<spdlog::logger>("geometer", sink);
  log->set_pattern("[%l] %v");
  log->set_level(spdlog::level::warn);
  return log;
}

}  // namespace

spdlog::logger& logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto log = make_logger();
    if (const char* env = std::getenv("GEOMETER_LOG")) log->set_level(spdlog::level::from_str(env));
    return log;
  }();
  return *instance;
}

void configure_logging_from_env() {
  const char* env = std::getenv("GEOMETER_LOG");
  logger().set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
}

}  // namespace geometer
