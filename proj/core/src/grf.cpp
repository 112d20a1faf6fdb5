#include "hierlid/grf.hpp"

#include <cmath>

#include "hierlid/error.hpp"

namespace hierlid::grf {

namespace {

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

using Grid = std::vector<std::complex<double>>;

void fft_rows(Grid& grid, std::size_t rows, std::size_t cols, bool inverse) {
  std::vector<std::complex<double>> row(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) row[c] = grid[r * cols + c];
    fft_radix2(row, inverse);
    for (std::size_t c = 0; c < cols; ++c) grid[r * cols + c] = row[c];
  }
}

void fft_cols(Grid& grid, std::size_t rows, std::size_t cols, bool inverse) {
  std::vector<std::complex<double>> col(rows);
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) col[r] = grid[r * cols + c];
    fft_radix2(col, inverse);
    for (std::size_t r = 0; r < rows; ++r) grid[r * cols + c] = col[r];
  }
}

}  // namespace

void fft_radix2(std::vector<std::complex<double>>& values, bool inverse) {
  const std::size_t n = values.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw Error(ErrorKind::PreconditionFailed, "FFT size must be a power of two");

  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(values[i], values[j]);
  }

  constexpr double kTau = 6.28318530717958647692;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = (inverse ? kTau : -kTau) / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(angle), std::sin(angle));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = values[i + j];
        const std::complex<double> v = values[i + j + len / 2] * w;
        values[i + j] = u + v;
        values[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(n);
    for (auto& v : values) v *= scale;
  }
}

Eigen::MatrixXd gaussian_random_field(Eigen::Index rows, Eigen::Index cols,
                                      double correlation_range_px, CounterRng& rng) {
  if (rows <= 0 || cols <= 0)
    throw Error(ErrorKind::PreconditionFailed, "field dimensions must be positive");

  const std::size_t pr = next_pow2(static_cast<std::size_t>(rows));
  const std::size_t pc = next_pow2(static_cast<std::size_t>(cols));

  Eigen::MatrixXd field(rows, cols);
  if (correlation_range_px <= 0.0) {
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) field(r, c) = rng.normal();
  } else {
    // Spectrum = FFT of the toroidal Gaussian correlation kernel.
    Grid spectrum(pr * pc);
    const double inv_two_r2 = 1.0 / (2.0 * correlation_range_px * correlation_range_px);
    for (std::size_t r = 0; r < pr; ++r) {
      const double dr = static_cast<double>(std::min(r, pr - r));
      for (std::size_t c = 0; c < pc; ++c) {
        const double dc = static_cast<double>(std::min(c, pc - c));
        spectrum[r * pc + c] = std::exp(-(dr * dr + dc * dc) * inv_two_r2);
      }
    }
    fft_rows(spectrum, pr, pc, false);
    fft_cols(spectrum, pr, pc, false);

    Grid noise(pr * pc);
    for (auto& v : noise) v = {rng.normal(), rng.normal()};
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
      const double s = std::max(0.0, spectrum[i].real());
      noise[i] *= std::sqrt(s);
    }
    fft_rows(noise, pr, pc, true);
    fft_cols(noise, pr, pc, true);

    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        field(r, c) = noise[static_cast<std::size_t>(r) * pc +
                            static_cast<std::size_t>(c)]
                          .real();
  }

  // Standardize the crop.
  const double mean = field.mean();
  field.array() -= mean;
  const double var = field.array().square().mean();
  if (var > 0.0) field /= std::sqrt(var);
  return field;
}

}  // namespace hierlid::grf
