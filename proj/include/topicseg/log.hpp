#pragma once

#include <functional>
#include <string>

namespace topicseg {

using WarningHandler = std::function<void(const std::string&)>;

// Default handler writes "warning: <msg>" to stderr. Tests may install a
// collector; passing nullptr restores the default.
void set_warning_handler(WarningHandler handler);
void warn(const std::string& message);

}  // namespace topicseg
