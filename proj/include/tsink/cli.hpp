// Subcommands of the `tsink` tool. Each one reads a resolved RunConfig,
// writes its files under the output directory (including a config.txt
// snapshot that reproduces the run) and returns an exit code:
// 0 success, 1 check failure or runtime error, 2 usage or configuration error.

#pragma once

#include <filesystem>
#include <iosfwd>

#include "tsink/config.hpp"

namespace tsink {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct CliContext {
    RunConfig cfg;
    std::filesystem::path out_dir;
    std::ostream& out;
    std::ostream& err;
};

int cmd_gradcheck(const CliContext& ctx);
int cmd_bounds_sweep(const CliContext& ctx);
int cmd_train(const CliContext& ctx);
int cmd_attn_export(const CliContext& ctx, const std::filesystem::path& checkpoint);

/// Parses the command line and dispatches. Never throws.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// SHA-1 of the library and tool sources at build time.
const char* code_version();

}  // namespace tsink
