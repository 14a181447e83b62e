#pragma once

#include <string>

namespace mivit {

// Write-to-temp-then-rename; callers never observe partial files.
void atomic_write_file(const std::string& path, const std::string& bytes);

}  // namespace mivit
