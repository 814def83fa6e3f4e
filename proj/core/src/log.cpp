#include "wavevae/log.hpp"

#include <cstdio>
#include <utility>

namespace wvae {

namespace {
WarningHandler& handler() {
    static WarningHandler h;
    return h;
}
}  // namespace

WarningHandler set_warning_handler(WarningHandler h) { return std::exchange(handler(), std::move(h)); }

void warn(const std::string& message) {
    if (handler()) {
        handler()(message);
        return;
    }
    std::fprintf(stderr, "warning: %s\n", message.c_str());
}

}  // namespace wvae
