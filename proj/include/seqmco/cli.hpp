#pragma once

#include <filesystem>

#include <json.hpp>

namespace seqmco {

// Exit codes: 0 success, 1 verify-suite assertion failure, 2 config/schema
// violation, 3 estimator collapse, 4 training abort.
struct CliRunResult {
  int exit_code = 0;
  std::filesystem::path run_dir;
};

CliRunResult cmd_estimate(const nlohmann::json& config,
                          const std::filesystem::path& out_root,
                          std::uint64_t seed, int jobs,
                          double weight_skew = 0.0);

CliRunResult cmd_verify(const nlohmann::json& config,
                        const std::filesystem::path& out_root,
                        std::uint64_t seed, int jobs,
                        double weight_skew = 0.0);

CliRunResult cmd_train(const nlohmann::json& config,
                       const std::filesystem::path& out_root,
                       std::uint64_t seed, int jobs);

CliRunResult cmd_sweep(const nlohmann::json& config,
                       const std::filesystem::path& out_root,
                       std::uint64_t seed, int jobs);

// Re-executes the command embedded in a manifest; the config digest and
// seed there are sufficient to reproduce the original outputs byte for
// byte (jobs may differ).
CliRunResult cmd_replay(const std::filesystem::path& manifest_path,
                        const std::filesystem::path& out_root, int jobs);

int run_cli(int argc, char** argv);

}  // namespace seqmco
