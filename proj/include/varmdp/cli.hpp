#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace varmdp {

// Runs the command-line tool in-process. args is argv without the program
// name; the return value is the process exit code:
//   0  success (every entry certified, no disagreement)
//   1  failure (uncertified result, compare mismatch, missing artifact, I/O)
//   2  invalid manifest or usage
//   3  instance failed to load or validate
//   4  a policy induced a multichain
//   5  an iteration or enumeration cap was exceeded
// stdout carries exactly one machine-parsable summary line per invocation;
// numeric results land in files under the run directory, never in the log.
int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace varmdp
