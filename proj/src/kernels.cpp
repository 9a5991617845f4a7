#include "varmdp/kernels.hpp"

#include <stdexcept>

#if defined(__x86_64__) || defined(__i386__)
#include <immintrin.h>
#define VARMDP_KERNELS_X86 1
#endif

#if defined(__aarch64__)
#include <arm_neon.h>
#define VARMDP_KERNELS_NEON 1
#endif

namespace varmdp::kernels {
namespace {

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double sum_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

void scale_scalar(double a, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

#if VARMDP_KERNELS_X86

__attribute__((target("avx2,fma"))) void axpy_avx2(double a, const double* x,
                                                   double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

__attribute__((target("avx2,fma"))) double dot_avx2(const double* x,
                                                    const double* y,
                                                    std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4),
                           _mm256_loadu_pd(y + i + 4), acc1);
  }
  if (i + 4 <= n) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    i += 4;
  }
  acc0 = _mm256_add_pd(acc0, acc1);
  alignas(32) double lane[4];
  _mm256_store_pd(lane, acc0);
  double acc = (lane[0] + lane[1]) + (lane[2] + lane[3]);
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

__attribute__((target("avx2,fma"))) double sum_avx2(const double* x,
                                                    std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
  alignas(32) double lane[4];
  _mm256_store_pd(lane, acc0);
  double acc = (lane[0] + lane[1]) + (lane[2] + lane[3]);
  for (; i < n; ++i) acc += x[i];
  return acc;
}

__attribute__((target("avx2,fma"))) void scale_avx2(double a, double* x,
                                                    std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

#endif  // VARMDP_KERNELS_X86

#if VARMDP_KERNELS_NEON

void axpy_neon(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

double dot_neon(const double* x, const double* y, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
  }
  if (i + 2 <= n) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
    i += 2;
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double sum_neon(const double* x, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc0 = vaddq_f64(acc0, vld1q_f64(x + i));
  double acc = vaddvq_f64(acc0);
  for (; i < n; ++i) acc += x[i];
  return acc;
}

void scale_neon(double a, double* x, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(x + i, vmulq_f64(va, vld1q_f64(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

#endif  // VARMDP_KERNELS_NEON

struct Ops {
  void (*axpy)(double, const double*, double*, std::size_t);
  double (*dot)(const double*, const double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  void (*scale)(double, double*, std::size_t);
};

constexpr Ops kScalarOps{axpy_scalar, dot_scalar, sum_scalar, scale_scalar};
#if VARMDP_KERNELS_X86
constexpr Ops kAvx2Ops{axpy_avx2, dot_avx2, sum_avx2, scale_avx2};
#endif
#if VARMDP_KERNELS_NEON
constexpr Ops kNeonOps{axpy_neon, dot_neon, sum_neon, scale_neon};
#endif

Backend detect() {
#if VARMDP_KERNELS_X86
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return Backend::avx2;
#endif
#if VARMDP_KERNELS_NEON
  return Backend::neon;
#endif
  return Backend::scalar;
}

const Ops* ops_for(Backend b) {
  switch (b) {
    case Backend::scalar:
      return &kScalarOps;
#if VARMDP_KERNELS_X86
    case Backend::avx2:
      return &kAvx2Ops;
#endif
#if VARMDP_KERNELS_NEON
    case Backend::neon:
      return &kNeonOps;
#endif
    default:
      return nullptr;
  }
}

Backend g_active = detect();
const Ops* g_ops = ops_for(detect());

}  // namespace

Backend active_backend() { return g_active; }

bool backend_available(Backend b) { return ops_for(b) != nullptr; }

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar:
      return "scalar";
    case Backend::avx2:
      return "avx2";
    case Backend::neon:
      return "neon";
  }
  return "?";
}

void force_backend(Backend b) {
  const Ops* ops = ops_for(b);
  if (!ops)
    throw std::invalid_argument(std::string("kernel backend unavailable: ") +
                                backend_name(b));
  g_active = b;
  g_ops = ops;
}

void reset_backend() {
  g_active = detect();
  g_ops = ops_for(g_active);
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  g_ops->axpy(a, x, y, n);
}

double dot(const double* x, const double* y, std::size_t n) {
  return g_ops->dot(x, y, n);
}

double sum(const double* x, std::size_t n) { return g_ops->sum(x, n); }

void scale(double a, double* x, std::size_t n) { g_ops->scale(a, x, n); }

}  // namespace varmdp::kernels
