#pragma once

#include <cstddef>

// Bulk transcendental kernels. On glibc >= 2.35 / x86-64 they are compiled against the
// vector math library (libmvec); elsewhere they fall back to scalar libm.
namespace mixerflow::vmath {

void exp(const double* x, double* y, std::size_t n);
void tanh(const double* x, double* y, std::size_t n);
/// y = x·Φ(x), with Φ(x) written to cdf.
void gelu(const double* x, double* y, double* cdf, std::size_t n);
/// out = g·(Φ(x) + x·φ(x)) given the Φ values saved by gelu().
void gelu_backward(const double* x, const double* cdf, const double* g, double* out, std::size_t n);

}  // namespace mixerflow::vmath
