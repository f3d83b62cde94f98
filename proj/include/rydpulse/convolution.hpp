#pragma once

#include <memory>
#include <span>

#include "rydpulse/core_model.hpp"
#include "rydpulse/potential.hpp"

namespace rydpulse {

/// Repeated application of one kernel to many densities. The FFT route
/// zero-pads to a linear convolution and must agree with convolve_direct to
/// 1e-10 relative to the largest output value.
class Convolver {
 public:
  Convolver(const InteractionKernel& kernel, ConvolutionMethod method);
  ~Convolver();
  Convolver(Convolver&&) noexcept;
  Convolver& operator=(Convolver&&) noexcept;
  Convolver(const Convolver&) = delete;
  Convolver& operator=(const Convolver&) = delete;

  void apply(std::span<const double> density, std::span<double> out);
  ConvolutionMethod method() const { return method_; }
  std::size_t fft_size() const;

 private:
  struct FftState;
  InteractionKernel kernel_;
  ConvolutionMethod method_;
  std::unique_ptr<FftState> fft_;
};

}  // namespace rydpulse
