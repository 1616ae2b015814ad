#pragma once

namespace gsavatar::io {

/// Entry point of the `gsavatar` tool. Returns 0 on success; failures print
/// one line `error: <code>: <message>` to stderr and return nonzero
/// (2 for usage errors, 1 otherwise).
int run_cli(int argc, char** argv);

}  // namespace gsavatar::io
