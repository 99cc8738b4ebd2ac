#include "sceneforge/paths.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <system_error>

#include "sceneforge/error.hpp"

namespace sceneforge {

namespace fs = std::filesystem;

fs::path default_data_dir() {
  if (const char* env = std::getenv("SCENEFORGE_DATA_DIR"); env && *env) return env;
  return SCENEFORGE_DEFAULT_DATA_DIR;
}

std::string library_version() { return SCENEFORGE_VERSION_STRING; }

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error("cannot replace " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace sceneforge
