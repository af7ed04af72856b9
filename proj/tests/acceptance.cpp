// SPDX-FileCopyrightText: 2026 vg3s contributors
// SPDX-License-Identifier: Apache-2.0

// Prints one PASS/FAIL line per acceptance criterion; exits 1 if any fails.

#include <iostream>

#include "vg3s/selftest.hpp"

int main() {
  vg3s::SelftestOptions opts;
  opts.include_training = true;
  bool ok = true;
  for (const vg3s::CheckResult& r : vg3s::run_selftest(opts)) {
    std::cout << (r.passed ? "PASS" : "FAIL") << " criterion " << r.criterion << " " << r.name << ": " << r.detail
              << " [" << r.seconds << " s]" << std::endl;
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}
