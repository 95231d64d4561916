#pragma once

#include "udr/tensor.hpp"

namespace udr::fft {

// In-place complex 1-D DFT of length n on split re/im arrays.
// inverse=false: X[k] = sum_n x[n] e^{-2пi kn/N} (unnormalized).
// inverse=true: x[n] = (1/N) sum_k X[k] e^{+2пi kn/N}.
// Radix-2 for powers of two, Bluestein otherwise.
template <typename T>
void dft_1d(T* re, T* im, std::int64_t n, bool inverse);

// Per-channel 2-D DFT over (H,W). Unnormalized forward.
template <typename T>
ComplexTensor<T> fft2(const Tensor<T>& x);

// Inverse of fft2 (1/(H*W)-normalized); returns the real part.
template <typename T>
Tensor<T> ifft2_real(const ComplexTensor<T>& x);

// Full complex inverse for round-trip and residue checks.
template <typename T>
ComplexTensor<T> ifft2(const ComplexTensor<T>& x);

// ||imag(ifft2(x))|| / ||real(ifft2(x))||, a diagnostic for spectra that are
// not Hermitian-symmetric.
template <typename T>
double ifft2_imag_residue(const ComplexTensor<T>& x);

}  // namespace udr::fft
