#include "biobench/errors.hpp"

#include <sstream>

namespace biobench {

std::string MissingFilesError::format(const std::vector<std::string>& missing) {
  std::ostringstream out;
  out << missing.size() << " missing file" << (missing.size() == 1 ? "" : "s");
  for (const auto& path : missing) {
    out << "\n  " << path;
  }
  return out.str();
}

std::string TransportError::format(const std::vector<std::string>& attempts) {
  std::ostringstream out;
  out << "retries exhausted after " << attempts.size() << " attempt"
      << (attempts.size() == 1 ? "" : "s");
  for (const auto& attempt : attempts) {
    out << "\n  " << attempt;
  }
  return out.str();
}

}  // namespace biobench
