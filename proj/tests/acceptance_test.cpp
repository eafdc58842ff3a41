// One PASS/FAIL line per acceptance criterion (full level).

#include <cstdio>

#include "fracheat/acceptance.hpp"

int main() {
    using namespace fracheat::acceptance;
    int failed = 0;
    run_all(Level::full, [&](const CriterionResult& r) {
        std::printf("[%s] criterion %d: %s (%.1f s) | %s\n", r.passed ? "PASS" : "FAIL", r.id, r.title.c_str(), r.seconds,
                    r.detail.c_str());
        std::fflush(stdout);
        failed += r.passed ? 0 : 1;
    });
    std::printf("%d of 9 criteria passed\n", 9 - failed);
    return failed == 0 ? 0 : 1;
}
