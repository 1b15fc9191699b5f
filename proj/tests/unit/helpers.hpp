#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace testing {

namespace fs = std::filesystem;

// Fresh scratch directory under PHONECLS_TEST_TMP (or the system temp dir).
inline fs::path scratch(const std::string& name) {
  const char* root = std::getenv("PHONECLS_TEST_TMP");
  const fs::path base = root ? fs::path(root) : fs::temp_directory_path() / "phonecls_tests";
  const auto dir = base / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream(path) << text;
}

}  // namespace testing
