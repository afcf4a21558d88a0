#pragma once

namespace eva::testing {

/// Fault injection for the verification harness: `eva_group_sign_flip`
/// negates the group contribution in the practical estimator's numerator so
/// the invariant suite can prove it would catch a broken build.
enum class Fault { none, eva_group_sign_flip };

void inject_fault(Fault fault);
Fault active_fault();

}  // namespace eva::testing
