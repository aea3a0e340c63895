#include "topicseg/log.hpp"

#include <iostream>
#include <mutex>
#include <utility>

namespace topicseg {

namespace {
std::mutex g_mutex;
WarningHandler g_handler;
}  // namespace

void set_warning_handler(WarningHandler handler) {
    std::lock_guard lock(g_mutex);
    g_handler = std::move(handler);
}

void warn(const std::string& message) {
    WarningHandler handler;
    {
        std::lock_guard lock(g_mutex);
        handler = g_handler;
    }
    if (handler) {
        handler(message);
    } else {
        std::cerr << "warning: " << message << "\n";
    }
}

}  // namespace topicseg
