#include "splitgs/errors.hpp"

#include <cstdio>

namespace splitgs {

namespace {

void default_warn(const std::string& msg) {
    std::fprintf(stderr, "[splitgs] warning: %s\n", msg.c_str());
}

WarnHandler g_warn_handler = &default_warn;

}  // namespace

void log_warn(const std::string& msg) {
    if (g_warn_handler) g_warn_handler(msg);
}

WarnHandler set_warn_handler(WarnHandler handler) {
    WarnHandler prev = g_warn_handler;
    g_warn_handler = handler ? handler : &default_warn;
    return prev;
}

}  // namespace splitgs
