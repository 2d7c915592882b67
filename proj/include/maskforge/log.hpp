#pragma once

#include <string>
#include <string_view>

namespace maskforge {

/// Structured progress lines on stderr: `stage=<s> image=<id> key=value ...`.
/// Lines are written atomically; output is off until enabled.
void set_logging(bool enabled);
bool logging_enabled();
void log_event(std::string_view stage, std::string_view image, const std::string& fields);

}  // namespace maskforge
