#pragma once

// Command-line surface: dataset generation, tracker and residual-policy
// training, track prediction, rigid fitting, planning, rollouts, evaluation,
// and report rendering. Every command takes an explicit --seed; all derived
// randomness comes from child_seed(seed, stage-name, index). Each command
// writes an artifact.json recording its exact config, master seed, and the
// content hashes of its inputs, so reruns are bitwise reproducible.
namespace trackplan::cli {

// Parses argv and dispatches one subcommand. Returns the process exit code:
// 0 on success, nonzero with a diagnostic on stderr otherwise.
int run(int argc, const char* const* argv);

}  // namespace trackplan::cli
