#pragma once

#include <string_view>

namespace loglab {

enum class Verbosity { quiet, warn, info };

void set_verbosity(Verbosity v);
Verbosity verbosity();

/// Writes a warning line to stderr unless verbosity is quiet.
void warn(std::string_view message);
/// Writes a progress line to stderr at info verbosity.
void info(std::string_view message);

}  // namespace loglab
