#include "ssmnet/log.hpp"

#include <iostream>
#include <mutex>

namespace ssmnet {
namespace {

std::mutex g_mutex;

void stderr_sink(LogLevel level, const std::string& msg) {
  std::cerr << (level == LogLevel::Warning ? "warning: " : "") << msg << '\n';
}

LogSink& sink() {
  static LogSink s = stderr_sink;
  return s;
}

void emit(LogLevel level, const std::string& msg) {
  std::lock_guard lock(g_mutex);
  if (sink()) sink()(level, msg);
}

}  // namespace

LogSink set_log_sink(LogSink s) {
  std::lock_guard lock(g_mutex);
  LogSink prev = std::move(sink());
  sink() = s ? std::move(s) : LogSink(stderr_sink);
  return prev;
}

void log_info(const std::string& msg) { emit(LogLevel::Info, msg); }
void log_warning(const std::string& msg) { emit(LogLevel::Warning, msg); }

}  // namespace ssmnet
