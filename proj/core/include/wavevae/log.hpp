#pragma once

#include <functional>
#include <string>

namespace wvae {

// Non-fatal diagnostics (ill-conditioned covariance, clamped distances, ...).
// They go to stderr unless a handler is installed; the previous handler is
// returned so callers can restore it.
using WarningHandler = std::function<void(const std::string&)>;

WarningHandler set_warning_handler(WarningHandler handler);
void warn(const std::string& message);

}  // namespace wvae
