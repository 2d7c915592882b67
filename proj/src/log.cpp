#include "maskforge/log.hpp"

#include <atomic>
#include <cstdio>
#include <mutex>

namespace maskforge {
namespace {

std::atomic<bool> g_enabled{false};
std::mutex g_mutex;

}  // namespace

void set_logging(bool enabled) { g_enabled = enabled; }
bool logging_enabled() { return g_enabled; }

void log_event(std::string_view stage, std::string_view image, const std::string& fields) {
  if (!g_enabled) return;
  std::string line = "stage=";
  line.append(stage);
  if (!image.empty()) {
    line += " image=";
    line.append(image);
  }
  if (!fields.empty()) {
    line += ' ';
    line += fields;
  }
  line += '\n';
  std::lock_guard<std::mutex> lock(g_mutex);
  std::fputs(line.c_str(), stderr);
}

}  // namespace maskforge
