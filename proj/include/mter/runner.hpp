#pragma once

// Command modes behind the `mter` executable.

#include "mter/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mter {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitNotConverged = 2;

const std::vector<std::string>& run_modes();

/// Runs one mode and writes its artifacts into `out_dir`. Input errors are
/// thrown before anything is written; the return value is 0 or 2.
int run_mode(const std::string& mode, const RunConfig& config, const std::filesystem::path& out_dir, std::ostream& log);

int run_compare(const std::filesystem::path& a, const std::filesystem::path& b, const std::filesystem::path& out_dir,
                std::ostream& log);

/// Honours MTER_NUM_THREADS if set.
void apply_thread_cap();

struct SweepSpec {
  std::string param;
  std::vector<std::string> values;
};

/// Parses "param: v1, v2, ...".
SweepSpec parse_sweep(const std::string& text);

}  // namespace mter
