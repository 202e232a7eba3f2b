#ifndef PTDELTA_CLI_HPP
#define PTDELTA_CLI_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ptdelta/bdg.hpp"

namespace ptdelta {

enum class OutputFormat { Csv, Json };

enum ExitCode : int {
  kExitOk = 0,
  kExitIo = 1,
  kExitPartial = 2,
  kExitNotFound = 3,
  kExitVerifyFailed = 4,
  kExitUsage = 64,
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  TrapParams trap;  // gamma is the working point of `propagate`
  double gamma_min = 0.0;
  double gamma_max = 0.45;
  double gamma_step = 0.01;
  std::vector<double> g_values{-1.0};
  BdgVariant variant = BdgVariant::Standard;
  std::string out_dir;  // empty: PTDELTA_OUT, then "ptdelta_out"
  OutputFormat format = OutputFormat::Csv;
  std::uint64_t seed = 0;
  int jobs = 0;  // 0: hardware concurrency

  // propagate
  double epsilon = 1e-4;
  double horizon = 150.0;
  double time_step = 0.01;

  void validate() const;
  std::vector<double> gamma_grid() const;
  std::filesystem::path output_dir() const;
  int worker_count() const;
};

/// Flat "key = value" text, one entry per line, '#' starts a comment.
/// Doubles are written with 17 significant digits so that parsing the
/// result gives back the same config.
std::string serialize_config(const RunConfig& c);
/// Applies the entries of `text` on top of `base`; unknown keys and bad
/// values raise UsageError.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& file, RunConfig base = {});
/// Applies a single key/value pair (the same keys as the config file).
void set_config_value(RunConfig& c, const std::string& key, const std::string& value);
bool operator==(const RunConfig& a, const RunConfig& b);

std::string to_string(OutputFormat f);
BdgVariant parse_variant(const std::string& s);
OutputFormat parse_format(const std::string& s);
NonlinearityMode parse_mode(const std::string& s);

/// %.12g.
std::string format_number(double v);

/// Result table written as CSV or as JSON {"columns": [...], "rows": [...]}.
struct Table {
  std::string name;  // file stem
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row);
  std::string csv() const;
  std::string json() const;
};

std::string sha256_hex(const std::string& bytes);

// Each command writes its tables plus "<command>_manifest.json" into the
// output directory, logs progress to `log` and returns an ExitCode.
int cmd_spectrum(const RunConfig& c, std::ostream& log);
int cmd_stability(const RunConfig& c, std::ostream& log);
int cmd_sweep(const RunConfig& c, std::ostream& log);
int cmd_verify(const RunConfig& c, std::ostream& log);
int cmd_propagate(const RunConfig& c, std::ostream& log);

/// Full command-line entry point (argv[1] is the subcommand).
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace ptdelta

#endif  // PTDELTA_CLI_HPP
