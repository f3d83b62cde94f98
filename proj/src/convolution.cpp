#include "rydpulse/convolution.hpp"

#include <fftw3.h>

#include <mutex>

#include "rydpulse/errors.hpp"

namespace rydpulse {

namespace {

// FFTW planning is not thread-safe; execution on distinct arrays is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

bool smooth_size(std::size_t n) {
  for (std::size_t p : {2, 3, 5, 7}) {
    while (n % p == 0) n /= p;
  }
  return n == 1;
}

std::size_t next_smooth(std::size_t n) {
  while (!smooth_size(n)) ++n;
  return n;
}

}  // namespace

struct Convolver::FftState {
  std::size_t size = 0;
  std::size_t n_z = 0;
  double* real = nullptr;
  fftw_complex* spectrum = nullptr;
  fftw_complex* kernel_spectrum = nullptr;
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;

  FftState(const InteractionKernel& kernel) : n_z(kernel.n_z()) {
    // Outputs i in [0, n) of the linear convolution sit at indices n-1+i of
    // the (2n-1)-long kernel convolved with the n-long density; a circular
    // transform of length >= 2n-1 leaves them unaliased.
    size = next_smooth(2 * n_z - 1);
    const std::size_t bins = size / 2 + 1;
    real = fftw_alloc_real(size);
    spectrum = fftw_alloc_complex(bins);
    kernel_spectrum = fftw_alloc_complex(bins);
    {
      std::lock_guard lock(planner_mutex());
      const int n = static_cast<int>(size);
      forward = fftw_plan_dft_r2c_1d(n, real, spectrum, FFTW_ESTIMATE);
      backward = fftw_plan_dft_c2r_1d(n, spectrum, real, FFTW_ESTIMATE);
    }
    if (forward == nullptr || backward == nullptr) throw NumericalError("fftw planning failed");

    const auto k = kernel.values();
    std::fill(real, real + size, 0.0);
    std::copy(k.begin(), k.end(), real);
    fftw_execute_dft_r2c(forward, real, kernel_spectrum);
  }

  ~FftState() {
    std::lock_guard lock(planner_mutex());
    if (forward) fftw_destroy_plan(forward);
    if (backward) fftw_destroy_plan(backward);
    fftw_free(real);
    fftw_free(spectrum);
    fftw_free(kernel_spectrum);
  }

  void apply(std::span<const double> density, std::span<double> out, double dz) {
    std::fill(real, real + size, 0.0);
    std::copy(density.begin(), density.end(), real);
    fftw_execute_dft_r2c(forward, real, spectrum);
    const std::size_t bins = size / 2 + 1;
    for (std::size_t b = 0; b < bins; ++b) {
      const double re = spectrum[b][0] * kernel_spectrum[b][0] - spectrum[b][1] * kernel_spectrum[b][1];
      const double im = spectrum[b][0] * kernel_spectrum[b][1] + spectrum[b][1] * kernel_spectrum[b][0];
      spectrum[b][0] = re;
      spectrum[b][1] = im;
    }
    fftw_execute_dft_c2r(backward, spectrum, real);
    const double scale = dz / static_cast<double>(size);
    for (std::size_t i = 0; i < n_z; ++i) out[i] = scale * real[n_z - 1 + i];
  }
};

Convolver::Convolver(const InteractionKernel& kernel, ConvolutionMethod method) : kernel_(kernel), method_(method) {
  if (method_ == ConvolutionMethod::fft) fft_ = std::make_unique<FftState>(kernel_);
}

Convolver::~Convolver() = default;
Convolver::Convolver(Convolver&&) noexcept = default;
Convolver& Convolver::operator=(Convolver&&) noexcept = default;

std::size_t Convolver::fft_size() const { return fft_ ? fft_->size : 0; }

void Convolver::apply(std::span<const double> density, std::span<double> out) {
  if (density.size() != kernel_.n_z() || out.size() != kernel_.n_z()) {
    throw NumericalError("convolution: length mismatch");
  }
  if (method_ == ConvolutionMethod::direct) {
    convolve_direct(kernel_, density, out);
  } else {
    fft_->apply(density, out, kernel_.dz());
  }
}

}  // namespace rydpulse
