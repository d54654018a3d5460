#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ecig::opcli {

enum class OutputMode { Human, Machine };

// Exit code for an HTTP status: 0 for 2xx, 1 for 4xx, 2 otherwise.
// A transport failure (no response) is status 0 and maps to 2.
int exit_code_for(int http_status) noexcept;

// Entry point without argv[0]. Subcommands: login, cmd, upload, records,
// profiles. Global flags: --server, --token, --token-file, --output.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ecig::opcli
