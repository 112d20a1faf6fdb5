#pragma once

#include <Eigen/Core>
#include <complex>
#include <vector>

#include "hierlid/rng.hpp"

namespace hierlid::grf {

/// In-place radix-2 FFT (inverse when `inverse`); size must be a power of 2.
void fft_radix2(std::vector<std::complex<double>>& values, bool inverse);

/// Stationary Gaussian random field by spectral synthesis: white noise is
/// shaped in the frequency domain by the spectrum of a Gaussian correlation
/// kernel with the given range (in pixels), synthesized on a power-of-two
/// torus and cropped. The crop is standardized to mean 0, variance 1.
/// A non-positive range yields white noise.
Eigen::MatrixXd gaussian_random_field(Eigen::Index rows, Eigen::Index cols,
                                      double correlation_range_px, CounterRng& rng);

}  // namespace hierlid::grf
