#pragma once

// Command-line front end. Every subcommand is reachable through run(), so the
// tests drive the same code path as the executable.
//
// Precedence of settings: command-line flags > --config file > defaults.
// The config file is flat "key=value" text whose keys are the flag names
// without leading dashes; '#' starts a comment.

#include "leddam/gradcheck.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace leddam::cli {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1; // runtime failure (divergence, failed check, ...)
inline constexpr int kExitUsage = 2;   // bad flags, bad config, unreadable or malformed input

/// Runs one command line (args excludes the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

struct FlagInfo {
    std::string name;          // e.g. "--T"
    std::string default_value; // empty for flags without a default
    std::string description;
};

std::vector<std::string> command_names();
/// Flags accepted by `command`, read back from the parser definition itself.
std::vector<FlagInfo> flag_registry(const std::string& command);
/// Help text of `command` (or of the program when empty).
std::string help_text(const std::string& command = "");

/// Parses "key=value" lines into "--key=value" tokens.
std::vector<std::string> config_file_tokens(const std::string& text);

/// One named set of gradient checks (e.g. all tensors of the attention block).
struct GradcheckGroup {
    std::string name;
    std::function<std::vector<TensorGradCheck>()> run;
};

/// Finite-difference battery over numerics, decomposition, attention and the
/// assembled models, on small random instances drawn from `seed`.
std::vector<GradcheckGroup> default_gradcheck_battery(std::uint64_t seed);

/// Prints one line per tensor ("group tensor scalars rel_err PASS|FAIL") and
/// returns true iff every tensor passed.
bool run_gradcheck_battery(const std::vector<GradcheckGroup>& battery, std::ostream& out);

} // namespace leddam::cli
