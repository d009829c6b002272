// Acceptance suite: one pass/fail line per criterion. Placeholder until the
// library lands.
#include <cstdio>

int main() {
    std::puts("acceptance: pending");
    return 1;
}
