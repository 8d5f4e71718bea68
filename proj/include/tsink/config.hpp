// Run configuration for the command-line tool.
//
// The file format is one `key = value` per line with dotted keys such as
// `train.epochs`; `#` starts a comment. Every key has a default, unknown keys
// are errors, and the resolved configuration can be written back out in the
// same format so a snapshot alone reproduces a run.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tsink/bounds.hpp"
#include "tsink/data.hpp"
#include "tsink/gradcheck.hpp"
#include "tsink/train.hpp"

namespace tsink {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DataSettings {
    std::string source = "synthetic";  // "synthetic" or "csv"
    std::string path;                  // CSV file when source = csv
    SyntheticConfig synthetic;         // seed is derived from the root seed
};

struct RunConfig {
    std::uint64_t seed = 0;
    GradcheckSettings gradcheck;
    SweepConfig sweep;
    DataSettings data;
    TrainConfig train;
    std::string variant = "no_reg";  // a variant name or "all"
    bool record_wall_time = false;

    /// Assigns one dotted key. Throws ConfigError for unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
    /// Every key with its current value, in a fixed order.
    std::vector<std::pair<std::string, std::string>> entries() const;
    /// Cross-field checks; throws ConfigError.
    void validate() const;
};

/// Applies `key = value` lines from `is` onto `cfg`.
void read_config(std::istream& is, RunConfig& cfg);
void read_config_file(const std::filesystem::path& path, RunConfig& cfg);
/// Applies a command-line override of the form `key=value`.
void apply_override(const std::string& kv, RunConfig& cfg);
void write_config(std::ostream& os, const RunConfig& cfg);

/// Comma-separated list helpers shared by config values and CLI flags.
std::vector<std::size_t> parse_size_list(const std::string& s);
std::vector<std::uint64_t> parse_seed_list(const std::string& s);

}  // namespace tsink
