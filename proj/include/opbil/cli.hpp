#ifndef OPBIL_CLI_HPP
#define OPBIL_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace opbil::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kVerification = 2,
  kIo = 3,
};

/// Runs one command. `args` excludes the program name. Results go to `out`,
/// diagnostics and progress to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

/// Parses `key = value` lines; blank lines and text after '#' are ignored.
/// Throws std::invalid_argument naming the line on malformed input.
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text);

}  // namespace opbil::cli

#endif  // OPBIL_CLI_HPP
