#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "segtriage/synth_gen.hpp"

namespace segtriage::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitUsage = 2;

struct GenOptions {
  std::string output;
  GeneratorConfig config;
};

struct ValidateOptions {
  std::string input;
};

struct ScoreOptions {
  std::string input;
  std::string output;
  std::string format = "csv";
  unsigned jobs = 0;  // 0: hardware concurrency
};

struct CorrelateOptions {
  std::string input;
  std::string output;
};

struct FitOptions {
  std::string input;
  std::string output;
  double alpha = 0.05;
};

struct SimulateOptions {
  std::string input;
  std::string output;
  std::string report;
  std::size_t fit_count = 30;
  std::uint64_t seed = 0;
  double alpha = 0.05;
  std::size_t trials = 0;
};

struct ServeOptions {
  std::string data_dir;
  std::string bind = "127.0.0.1:8080";
  std::string palette;
};

int cmd_gen(const GenOptions& opts);
int cmd_validate(const ValidateOptions& opts);
int cmd_score(const ScoreOptions& opts);
int cmd_correlate(const CorrelateOptions& opts);
int cmd_fit(const FitOptions& opts);
int cmd_simulate(const SimulateOptions& opts);
int cmd_serve(const ServeOptions& opts);

}  // namespace segtriage::cli
