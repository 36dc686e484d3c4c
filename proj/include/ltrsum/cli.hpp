// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace ltrsum {

// Dispatches {synth, segment, label, train, rank, eval}. Data goes to
// files or stdout, diagnostics to stderr. Returns 0 on success, 1 on
// validation/usage errors, 2 on runtime failures.
int cli_run(int argc, const char* const* argv);

}  // namespace ltrsum
