#pragma once

namespace rs2 {

// Entry point behind the rs2 binary: synth | train | eval | gradcheck |
// ablate. Returns the process exit code. Setting RS2_VERIFY=1 in the
// environment forces float64 computation for bitwise-reproducible output.
int run_cli(int argc, char** argv);

} // namespace rs2
