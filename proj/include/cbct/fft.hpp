#pragma once

#include <complex>
#include <cstdint>
#include <vector>

namespace cbct {

// In-place iterative radix-2 complex FFT. Length must be a power of two.
void fft_pow2(std::vector<std::complex<double>>& a, bool inverse);

inline int64_t next_pow2(int64_t n) {
    int64_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

}  // namespace cbct
