/* Deterministic compute loop for benchmarking demos.
 *
 * Runs a fixed-seed xorshift chain for N iterations and prints a metrics
 * JSON object on the last stdout line. The checksum depends only on the
 * iteration count, so any correct build at any optimization level prints
 * the same value.
 */
#include <stdint.h>
#include <stdio.h>
#include <stdlib.h>

int main(int argc, char** argv) {
    long long iterations = 100000000LL;
    if (argc > 1) {
        iterations = atoll(argv[1]);
    }
    if (iterations <= 0) {
        fprintf(stderr, "iterations must be positive\n");
        return 1;
    }

    uint64_t x = UINT64_C(0x9e3779b97f4a7c15); /* fixed seed */
    uint64_t acc = 0;
    for (long long i = 0; i < iterations; ++i) {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        acc += x;
    }

    printf("hello-bench: %lld iterations\n", iterations);
    printf("{\"checksum\":\"%016llx\",\"ops\":%lld}\n", (unsigned long long)acc, iterations);
    return 0;
}
