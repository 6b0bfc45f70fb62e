#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pqlab::cli {

// Manifest-driven front end. Subcommands: gen-data, train, build-index,
// query, attack, eval, transfer-bits, transfer-models.
// Exit codes: 0 success, 2 usage error, 3 numeric failure, 4 missing
// artifact.
int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

// Per-stage child seed derived from the global seed and the stage name.
std::uint64_t stage_seed(std::uint64_t global_seed, const std::string& stage);

}  // namespace pqlab::cli
