#pragma once

#include <functional>
#include <string>

namespace vulstyle {

using LogSink = std::function<void(const std::string&)>;

/// Replaces the warning sink (stderr by default) and returns the previous one.
/// Passing an empty function restores the default.
LogSink set_warning_sink(LogSink sink);
void warn(const std::string& message);

}  // namespace vulstyle
