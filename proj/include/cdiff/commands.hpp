#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "cdiff/config.hpp"

namespace cdiff {

// Command implementations behind the CLI verbs. All of them write a canonical
// config echo into the run directory so a run can be reproduced exactly.
// They throw config_error for configuration problems (mapped to exit code 2
// by the CLI) and return a process exit code otherwise.

int cmd_generate(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);
int cmd_train(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);
int cmd_classify_train(const RunConfig& cfg, const std::filesystem::path& out_dir,
                       std::ostream& log);
int cmd_saliency(const RunConfig& cfg, const std::string& method,
                 const std::filesystem::path& out_dir, std::ostream& log);
int cmd_eval(const RunConfig& cfg, const std::vector<std::filesystem::path>& pred_dirs,
             const std::filesystem::path& manifest_path, const std::filesystem::path& out_dir,
             std::ostream& log);
int cmd_ablate(const RunConfig& cfg, const std::string& axis, const std::vector<double>& values,
               const std::string& method, const std::filesystem::path& out_dir,
               std::ostream& log);

// Default run-directory name when --out is not given: <verb>-<utc>-seed<N>.
std::filesystem::path default_run_dir(const std::string& verb, std::uint64_t seed);

} // namespace cdiff
