#pragma once

#include "pipeline.hpp"

#include "clvlab/io.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace clvlab::testing {

inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("clvlab-test-" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

// Relative path -> content digest for every regular file under `dir`.
inline std::map<std::string, std::string> digest_tree(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) {
      out[std::filesystem::relative(e.path(), dir).generic_string()] = io::file_digest(e.path());
    }
  }
  return out;
}

}  // namespace clvlab::testing
