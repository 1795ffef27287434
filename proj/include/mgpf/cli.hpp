#pragma once

// Command-line front end. Subcommands: train-obs, filter, simulate,
// evaluate, idw-baseline. Each reads a JSON config (--config), writes into
// --out, and records a metadata.json sidecar with the seed and config digest.
//
// Exit codes: 0 success, 2 validation error, 3 numerical failure.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace mgpf::cli {

inline constexpr const char* kVersion = "0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::string out;
};

// Each returns an exit code; errors propagate as exceptions.
int cmd_train_obs(const CommonOptions& opt, std::ostream& log);
int cmd_filter(const CommonOptions& opt, std::ostream& log);
int cmd_simulate(const CommonOptions& opt, std::ostream& log);
int cmd_evaluate(const CommonOptions& opt, std::ostream& log);
int cmd_idw_baseline(const CommonOptions& opt, std::ostream& log);

// Parses argv, dispatches, and maps exceptions to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mgpf::cli
