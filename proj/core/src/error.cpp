#include "lfu/error.hpp"

#include <atomic>

#include <spdlog/spdlog.h>

namespace lfu {

namespace {
std::atomic<bool> g_warnings_enabled{true};
}

void warn(const std::string& message) {
  if (g_warnings_enabled.load(std::memory_order_relaxed)) {
    spdlog::warn("lfu: {}", message);
  }
}

void set_warnings_enabled(bool enabled) {
  g_warnings_enabled.store(enabled, std::memory_order_relaxed);
}

}  // namespace lfu
