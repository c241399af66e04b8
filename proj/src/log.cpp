#include "kervolt/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace kervolt::log {

namespace {
std::atomic<std::size_t> g_warn_count{0};
std::mutex g_stream_mutex;
}  // namespace

void warn(std::string_view msg) {
  g_warn_count.fetch_add(1, std::memory_order_relaxed);
  std::lock_guard<std::mutex> lock(g_stream_mutex);
  std::cerr << "[kervolt] warning: " << msg << "\n";
}

std::size_t warn_count() { return g_warn_count.load(std::memory_order_relaxed); }

void reset_warn_count() { g_warn_count.store(0, std::memory_order_relaxed); }

}  // namespace kervolt::log
