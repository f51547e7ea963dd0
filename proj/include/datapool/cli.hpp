#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace datapool::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitServerError = 1;
inline constexpr int kExitLocalError = 2;

struct CliConfig {
  std::string server = "http://127.0.0.1:8080";
  std::string token;
  bool json = false;
};

/// $XDG_CONFIG_HOME/datapool/config, else ~/.config/datapool/config.
std::filesystem::path default_config_path();

/// Reads "key = value" pairs (server, token). A file that holds a token must
/// not be group/world accessible; throws Error(validation) if it is.
CliConfig read_config_file(const std::filesystem::path& path);

/// Entry point for the `datapool` command. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Every document text in a corpus directory: *.jsonl files contribute their
/// "text" fields, other regular files are one document each. Files are visited
/// in sorted path order.
std::vector<std::string> read_corpus_dir(const std::filesystem::path& dir);

}  // namespace datapool::cli
