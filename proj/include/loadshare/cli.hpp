#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "loadshare/config.hpp"
#include "loadshare/harness.hpp"

namespace loadshare::cli {

/// Writes every per-case artifact plus the batch summary and the effective
/// config echo. All files go through atomic temp-and-rename writes.
void write_outputs(const config::RunConfig& cfg,
                   const std::vector<harness::CaseRun>& runs,
                   const std::filesystem::path& out_dir);

nlohmann::ordered_json build_summary(const config::RunConfig& cfg,
                                     const std::vector<harness::CaseRun>& runs);

/// Entry point behind main(). Returns the process exit code:
/// 0 success, 1 configuration error, 2 runtime abort.
int run_main(const std::vector<std::string>& args);

}  // namespace loadshare::cli
