#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "fracdiff/forward.hpp"
#include "fracdiff/spectral.hpp"

namespace fracdiff::cli {

using json = nlohmann::json;

enum ExitCode : int { ok = 0, config_failure = 2, numerical_failure = 3, hypothesis_failure = 4 };

// "c*sin(k*x) + ..." ; "0" is the empty sum
std::vector<SineTerm> parse_field_spec(const std::string& text);

// numbers, or strings of the form [c*]pi[/d]
double parse_scalar(const json& value);

void write_text_atomic(const std::filesystem::path& path, const std::string& text);
// header t,u; 17 significant digits
void write_trace_csv(const std::filesystem::path& path, const ObservationTrace& trace);
ObservationTrace read_trace_csv(const std::filesystem::path& path);

struct RunOptions {
    std::filesystem::path out_dir = ".";
    std::filesystem::path config_dir = ".";
    std::uint64_t seed = 0;
    bool verbose = false;
};

// Runs one subcommand on a parsed config. Writes outputs (or error.json) into
// out_dir and returns the exit code.
int run_command(const std::string& command, const json& config, const RunOptions& options);

int main_entry(int argc, char** argv);

}  // namespace fracdiff::cli
