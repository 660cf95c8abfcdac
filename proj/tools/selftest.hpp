#pragma once

namespace macroptim {

// Reduced-size invariant battery across every module; prints one line per
// check and returns 0 iff all pass. Wired to the `selftest` subcommand.
int run_selftest();

} // namespace macroptim
