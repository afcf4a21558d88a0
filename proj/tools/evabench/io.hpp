#pragma once

#include <string>

namespace evabench {

/// Writes to `<path>.tmp` and renames into place, so a failed run never
/// leaves a partial output file.
void atomic_write(const std::string& path, const std::string& content);

}  // namespace evabench
