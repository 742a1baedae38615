#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ckgr/config.hpp"
#include "ckgr/dataset.hpp"

namespace ckgr {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// Runs one command line (without the program name). Never throws: errors are printed to
// `err` as one line and mapped to exit code 1 (validation) or 2 (runtime fault).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Git blob object id: SHA-1 over "blob <size>\0" followed by the content.
std::string git_blob_sha1(const std::string& content);
std::string git_blob_sha1_file(const std::filesystem::path& path);

struct LoadedInputs {
    DatasetInputs inputs;
    std::vector<std::filesystem::path> files;  // every file that was read
};

// Parses the files named by data.* keys and applies the implicit and min-interaction rules.
LoadedInputs load_inputs(const RunConfig& cfg, std::ostream& err);

}  // namespace ckgr
