#include "evabench/io.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace evabench {

void atomic_write(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("cannot open " + tmp + " for writing");
    }
    out << content;
    if (!out.flush()) {
      throw std::runtime_error("failed writing " + tmp);
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace evabench
