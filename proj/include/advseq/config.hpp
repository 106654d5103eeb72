#pragma once

#include <map>
#include <string>

namespace advseq {

// Experiment configuration: an INI-style file with [section] headers and
// key = value lines, '#' comments. CLI overrides are applied on top and the
// canonical (sorted) rendering of the merged map is what gets hashed, so the
// hash identifies the effective run.
class IniConfig {
 public:
  static IniConfig parse_string(const std::string& text);
  static IniConfig parse_file(const std::string& path);

  void set(const std::string& section, const std::string& key, std::string value);
  // "section.key=value" form used by --set flags.
  void set_dotted(const std::string& assignment);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const;
  int get_int(const std::string& section, const std::string& key, int fallback) const;
  double get_double(const std::string& section, const std::string& key,
                    double fallback) const;
  uint64_t get_u64(const std::string& section, const std::string& key,
                   uint64_t fallback) const;

  std::string canonical() const;
  std::string hash() const;  // FNV-1a of canonical(), hex

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace advseq
