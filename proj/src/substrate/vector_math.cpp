#include "vector_math.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#if defined(__x86_64__) && defined(__GLIBC__) && (__GLIBC__ > 2 || (__GLIBC__ == 2 && __GLIBC_MINOR__ >= 35))
#define MIXERFLOW_SIMD_DECL __attribute__((simd("notinbranch")))
extern "C" {
double exp(double) noexcept MIXERFLOW_SIMD_DECL;
double erfc(double) noexcept MIXERFLOW_SIMD_DECL;
double tanh(double) noexcept MIXERFLOW_SIMD_DECL;
}
#endif

namespace mixerflow::vmath {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// Every element goes through the same fixed-width kernel; the ragged tail is copied into a
// zero-padded block. A scalar tail loop would call libm instead of the vector variants and
// round differently, so a value's result would depend on where it sits in the array.
constexpr std::size_t kBlock = 8;

[[gnu::noinline]] void exp_block(const double* x, double* y) {
#pragma omp simd
  for (std::size_t i = 0; i < kBlock; ++i) y[i] = ::exp(x[i]);
}

[[gnu::noinline]] void tanh_block(const double* x, double* y) {
#pragma omp simd
  for (std::size_t i = 0; i < kBlock; ++i) y[i] = ::tanh(x[i]);
}

[[gnu::noinline]] void gelu_block(const double* x, double* y, double* cdf) {
#pragma omp simd
  for (std::size_t i = 0; i < kBlock; ++i) {
    const double c = 0.5 * ::erfc(-x[i] * kInvSqrt2);
    cdf[i] = c;
    y[i] = x[i] * c;
  }
}

[[gnu::noinline]] void gelu_backward_block(const double* x, const double* cdf, const double* g, double* out) {
#pragma omp simd
  for (std::size_t i = 0; i < kBlock; ++i) {
    const double pdf = kInvSqrt2Pi * ::exp(-0.5 * x[i] * x[i]);
    out[i] = g[i] * (cdf[i] + x[i] * pdf);
  }
}

struct Tail {
  double a[kBlock] = {};
  double b[kBlock] = {};
  double c[kBlock] = {};
  double d[kBlock] = {};
};

}  // namespace

void exp(const double* x, double* y, std::size_t n) {
  const std::size_t full = n - n % kBlock;
  for (std::size_t i = 0; i < full; i += kBlock) exp_block(x + i, y + i);
  if (full == n) return;
  Tail t;
  std::copy(x + full, x + n, t.a);
  exp_block(t.a, t.b);
  std::copy(t.b, t.b + (n - full), y + full);
}

void tanh(const double* x, double* y, std::size_t n) {
  const std::size_t full = n - n % kBlock;
  for (std::size_t i = 0; i < full; i += kBlock) tanh_block(x + i, y + i);
  if (full == n) return;
  Tail t;
  std::copy(x + full, x + n, t.a);
  tanh_block(t.a, t.b);
  std::copy(t.b, t.b + (n - full), y + full);
}

void gelu(const double* x, double* y, double* cdf, std::size_t n) {
  const std::size_t full = n - n % kBlock;
  for (std::size_t i = 0; i < full; i += kBlock) gelu_block(x + i, y + i, cdf + i);
  if (full == n) return;
  Tail t;
  std::copy(x + full, x + n, t.a);
  gelu_block(t.a, t.b, t.c);
  std::copy(t.b, t.b + (n - full), y + full);
  std::copy(t.c, t.c + (n - full), cdf + full);
}

void gelu_backward(const double* x, const double* cdf, const double* g, double* out, std::size_t n) {
  const std::size_t full = n - n % kBlock;
  for (std::size_t i = 0; i < full; i += kBlock) gelu_backward_block(x + i, cdf + i, g + i, out + i);
  if (full == n) return;
  Tail t;
  std::copy(x + full, x + n, t.a);
  std::copy(cdf + full, cdf + n, t.b);
  std::copy(g + full, g + n, t.c);
  gelu_backward_block(t.a, t.b, t.c, t.d);
  std::copy(t.d, t.d + (n - full), out + full);
}

}  // namespace mixerflow::vmath
