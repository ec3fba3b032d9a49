#pragma once

#include <string_view>

namespace perjar::detail {

/// Contents of templates/<version>/<relative_path>, embedded at build time.
/// Throws std::out_of_range for an unknown path.
std::string_view template_text(std::string_view relative_path);

std::string_view embedded_template_version() noexcept;

}  // namespace perjar::detail
