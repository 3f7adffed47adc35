#pragma once

#include <functional>
#include <string>
#include <vector>

namespace flowexp {

struct SuiteResult {
    int index = 0;  // 1-based
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0;
};

struct SelftestReport {
    unsigned seed = 0;
    std::vector<SuiteResult> suites;
    bool all_pass() const;
    int first_failure() const;  // 0 when everything passed
};

constexpr unsigned kDefaultSeed = 20240607;

std::vector<std::string> selftest_suite_names();
// Runs every invariant suite (or only `only` when it is nonempty). All random
// inputs come from a generator seeded with `seed`.
SelftestReport run_selftest(unsigned seed = kDefaultSeed, const std::string& only = "",
                            const std::function<void(const SuiteResult&)>& progress = nullptr);

}  // namespace flowexp
