#ifndef STSB_CLI_IO_HPP
#define STSB_CLI_IO_HPP

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "stsb/core.hpp"
#include "stsb/mcmc.hpp"
#include "stsb/predict_eval.hpp"

namespace stsb {

inline constexpr const char* kVersion = "stsb 0.1.0";

/// Shortest decimal text with 17 significant digits; exact round trip.
std::string format_number(double v);

// Dataset CSV: header "s1,s2,t,y[,x1,...]"; an empty y marks a missing response.
Dataset read_dataset(std::istream& in);
Dataset load_csv(const std::filesystem::path& path);
void write_dataset(std::ostream& out, const Dataset& data);
void write_csv(const std::filesystem::path& path, const Dataset& data);

struct Config {
  HyperPriors hyper;
  McmcConfig mcmc;
  // key=value lines in canonical order, for manifests.
  std::vector<std::pair<std::string, std::string>> echo() const;
};

/// Flat key=value text; '#' starts a comment. Unknown keys are rejected.
Config parse_config_text(const std::string& text);
Config parse_config(const std::filesystem::path& path);

// Trace CSV, long format "iter,param,value". Rows with iter -1 carry the
// settings prediction needs.
void write_trace(std::ostream& out, const ChainTrace& trace);
void write_trace_csv(const std::filesystem::path& path, const ChainTrace& trace);
ChainTrace read_trace(std::istream& in);
ChainTrace read_trace_csv(const std::filesystem::path& path);

void write_predictions(std::ostream& out, const PredictionResult& pred);
void write_predictions_csv(const std::filesystem::path& path, const PredictionResult& pred);
PredictionResult read_predictions_csv(const std::filesystem::path& path);

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

struct RunManifest {
  std::string command;
  std::vector<std::pair<std::string, std::string>> config;
  std::uint64_t seed = 0;
  std::string version = kVersion;
  double duration_seconds = 0.0;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
};

/// Writes to a temporary name and renames, so a manifest exists only after
/// a complete run.
void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);

/// Entry point of the command-line tool. Returns 0 on success, 2 on usage
/// errors and 1 on runtime failures.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace stsb

#endif  // STSB_CLI_IO_HPP
