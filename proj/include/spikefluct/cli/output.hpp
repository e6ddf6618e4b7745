#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include "spikefluct/error.hpp"

namespace spikefluct::cli {

/// Output files staged in memory and written together. Each file goes to a
/// temporary name first and is renamed into place; if any step fails,
/// everything already placed by this set is removed again.
class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }

  const std::filesystem::path& dir() const { return dir_; }

  std::vector<std::filesystem::path> commit() {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw Error("cannot create output directory '" + dir_.string() + "': " + ec.message());
    std::vector<fs::path> placed;
    try {
      for (const auto& [name, content] : files_) {
        const fs::path target = dir_ / name;
        const fs::path tmp = dir_ / (name + ".partial");
        {
          std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
          if (!out) throw Error("cannot write '" + tmp.string() + "'");
          out.write(content.data(), static_cast<std::streamsize>(content.size()));
          out.flush();
          if (!out) {
            fs::remove(tmp, ec);
            throw Error("failed writing '" + tmp.string() + "'");
          }
        }
        fs::rename(tmp, target, ec);
        if (ec) {
          fs::remove(tmp, ec);
          throw Error("cannot move '" + tmp.string() + "' into place");
        }
        placed.push_back(target);
      }
    } catch (...) {
      for (const auto& p : placed) fs::remove(p, ec);
      throw;
    }
    return placed;
  }

 private:
  std::filesystem::path dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

/// Quotes a CSV field when it contains a separator, quote or newline.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace spikefluct::cli
