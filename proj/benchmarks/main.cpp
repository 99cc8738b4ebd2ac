#include <benchmark/benchmark.h>

// The distribution's benchmark_main archive carries LTO bytecode from a
// different compiler build, so the entry point lives here instead.
BENCHMARK_MAIN();
