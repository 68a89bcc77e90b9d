#ifndef PETMAE_CLI_HPP
#define PETMAE_CLI_HPP

namespace petmae::cli {

/// Entry point shared by the binary and the CLI tests.
/// Exit codes: 0 success, 1 usage error, 2 data error.
int dispatch(int argc, const char* const* argv);

} // namespace petmae::cli

#endif
