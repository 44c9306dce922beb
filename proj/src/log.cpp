#include "vulstyle/log.hpp"

#include <iostream>
#include <mutex>

namespace vulstyle {
namespace {

std::mutex sink_mutex;
LogSink current_sink;

}  // namespace

LogSink set_warning_sink(LogSink sink) {
  std::lock_guard lock(sink_mutex);
  std::swap(current_sink, sink);
  return sink;
}

void warn(const std::string& message) {
  std::lock_guard lock(sink_mutex);
  if (current_sink) {
    current_sink(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

}  // namespace vulstyle
