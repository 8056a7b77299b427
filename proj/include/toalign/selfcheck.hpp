#pragma once

#include <string>
#include <vector>

namespace toalign {

// Built-in invariant suites behind the `check` CLI verb. Tolerances are fixed
// here; callers only choose how much randomized work to do.
struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

// Finite-difference checks for every differentiable op (per seed), the
// composed extractor->classifier->cross-entropy and
// extractor->reversal->discriminator graphs, and exact reversal-layer
// contracts. Relative error bound 1e-4, step 1e-4, kink-adjacent points
// excluded.
std::vector<CheckResult> run_gradient_checks(int seeds);

// Feature-decomposition invariants over random trials: energy conservation,
// exact antisymmetry, constant-weight identity, scale covariance, the
// linear-classifier row identity, and the stop-gradient contract.
std::vector<CheckResult> run_decomposition_checks(int trials);

// Learning-rate / reversal-strength schedule anchors and defaults.
std::vector<CheckResult> run_schedule_checks();

// Closed-form loss values: uniform cross entropy and the indifferent
// discriminator.
std::vector<CheckResult> run_loss_anchor_checks();

std::vector<CheckResult> run_all_checks();

// Prints one line per result; returns true when everything passed.
bool report_checks(const std::vector<CheckResult>& results);

}  // namespace toalign
