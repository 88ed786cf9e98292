// Timing comparison of the OpenMP field kernels against their serial
// reference implementations, plus an equality check (the two paths must be
// bit-identical by construction).
#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "spop/dynamics.hpp"

using namespace spop;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void bench_fv(std::uint64_t sites, int K, int steps) {
  const HierSpec spec{4, static_cast<int>(std::round(std::log2(sites) / 2)), {1.0, 0.5, 0.25}};
  MigrationOp mig = MigrationOp::hier(spec);
  const std::uint64_t S = spec.group().size();

  FvParams params;
  params.K = K;
  params.d = 1.0;
  params.dt = 1e-3;
  std::vector<double> theta(K, 1.0 / K);

  SimplexField a = SimplexField::constant(S, theta);
  SimplexField b = a;
  StepDiagnostics diag;

  auto t0 = std::chrono::steady_clock::now();
  for (int s = 0; s < steps; ++s) step_interacting_fv_serial(a, params, mig, s, 42, diag);
  const double serial = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  for (int s = 0; s < steps; ++s) step_interacting_fv(b, params, mig, s, 42, diag);
  const double parallel = seconds_since(t0);

  const bool equal = std::memcmp(a.x.data(), b.x.data(), a.x.size() * sizeof(double)) == 0;
  std::printf("fv        sites=%llu K=%d steps=%d  serial %.3fs  omp %.3fs  speedup %.2fx  %s\n",
              static_cast<unsigned long long>(S), K, steps, serial, parallel, serial / parallel,
              equal ? "bit-identical" : "MISMATCH");
}

void bench_seedbank(std::uint64_t sites, int colours, int steps) {
  const int L = static_cast<int>(std::round(std::log2(static_cast<double>(sites))));
  const HierSpec spec{2, L, {1.0}};
  MigrationOp mig = MigrationOp::hier(spec);
  const std::uint64_t S = spec.group().size();

  SeedbankParams params;
  params.b = 1.0;
  params.dt = 1e-3;
  for (int m = 0; m < colours; ++m) {
    params.exchange_rate.push_back(1.0 / (m + 1.0));
    params.relative_size.push_back(1.0 / (m + 1.0));
  }

  SeedbankField a = SeedbankField::constant(S, colours, 0.5, 0.5);
  SeedbankField b = a;
  StepDiagnostics diag;

  auto t0 = std::chrono::steady_clock::now();
  for (int s = 0; s < steps; ++s) step_seedbank_serial(a, params, mig, s, 42, diag);
  const double serial = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  for (int s = 0; s < steps; ++s) step_seedbank(b, params, mig, s, 42, diag);
  const double parallel = seconds_since(t0);

  const bool equal = std::memcmp(a.x.data(), b.x.data(), a.x.size() * sizeof(double)) == 0 &&
                     std::memcmp(a.y.data(), b.y.data(), a.y.size() * sizeof(double)) == 0;
  std::printf("seedbank  sites=%llu colours=%d steps=%d  serial %.3fs  omp %.3fs  speedup %.2fx  %s\n",
              static_cast<unsigned long long>(S), colours, steps, serial, parallel,
              serial / parallel, equal ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  int steps = argc > 1 ? std::atoi(argv[1]) : 200;
  std::printf("threads: %d\n", omp_get_max_threads());
  bench_fv(4096, 2, steps);
  bench_fv(4096, 8, steps);
  bench_seedbank(16384, 1, steps);
  bench_seedbank(16384, 4, steps);
  return 0;
}
