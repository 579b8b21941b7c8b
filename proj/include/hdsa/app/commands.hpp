#pragma once

#include "hdsa/app/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace hdsa::app {

enum ExitCode : int { exit_ok = 0, exit_config = 1, exit_optimizer = 2, exit_gsvd = 3, exit_verify = 4 };

struct CommandOptions {
  std::optional<std::filesystem::path> out;  // overrides config output
  std::optional<std::uint64_t> seed;         // overrides gsvd.seed
  int threads = 1;
};

// --threads if given, else HDSA_THREADS, else 1.
int resolve_threads(std::optional<int> flag);

// Each command writes its files plus summary.json (with a manifest) into the
// output directory and returns an ExitCode. Progress goes to `log`.
int cmd_solve(const RunConfig& config, const CommandOptions& options, std::ostream& log);
int cmd_hdsa(const RunConfig& config, const CommandOptions& options, std::ostream& log);
int cmd_predict(const RunConfig& config, const CommandOptions& options, std::ostream& log);
int cmd_verify(const CommandOptions& options, std::ostream& log);

// Writes files atomically (temporary + rename) and records them.
class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path dir);
  const std::filesystem::path& path() const { return dir_; }
  void write(const std::string& name, const std::string& content);
  const std::vector<std::string>& manifest() const { return manifest_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> manifest_;
};

// "node,x[,y],<columns...>" rows; values printed with round-trip precision.
std::string field_csv(const std::vector<Index>& nodes, const Eigen::MatrixX2d& coords, int dimension,
                      const std::vector<std::string>& names, const Matrix& values);
std::string format_double(double v);

}  // namespace hdsa::app
