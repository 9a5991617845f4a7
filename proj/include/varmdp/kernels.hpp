#pragma once

#include <cstddef>

namespace varmdp::kernels {

// Every kernel has a scalar reference implementation and, where the hardware
// allows, a vectorized variant. The backend is picked once at startup from
// CPU features; force_backend narrows it (equivalence tests run identical
// inputs through every available lane and compare).
enum class Backend { scalar, avx2, neon };

Backend active_backend();
bool backend_available(Backend b);
const char* backend_name(Backend b);

// Throws std::invalid_argument if the backend is not available on this CPU.
void force_backend(Backend b);
void reset_backend();

// y[i] += a * x[i]
void axpy(double a, const double* x, double* y, std::size_t n);

// sum of x[i] * y[i]
double dot(const double* x, const double* y, std::size_t n);

// sum of x[i]
double sum(const double* x, std::size_t n);

// x[i] *= a
void scale(double a, double* x, std::size_t n);

}  // namespace varmdp::kernels
