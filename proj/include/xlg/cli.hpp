#pragma once

// Command-line entry point: `xlg <subcommand> [flags]`.
//
// Subcommands: synth, ingest, experts, align, probe, steer-spec, lang-freq, report.
// Exit codes: 0 success, 1 invalid input, 2 usage error.

#include <iosfwd>
#include <string>
#include <vector>

namespace xlg::cli {

inline constexpr const char* kToolVersion = "1.0.0";

/// args[0] is the program name, as in argv.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace xlg::cli
