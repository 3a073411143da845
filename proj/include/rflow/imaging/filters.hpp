#pragma once

#include <vector>

#include "rflow/imaging/image.hpp"

namespace rflow::imaging {

/// Sampled Gaussian truncated at ceil(4 sigma), normalized to unit sum.
std::vector<double> gaussian_kernel(double sigma);

/// Sampled second derivative of the Gaussian on the same support, corrected
/// to zero sum and an exact second moment so constants and ramps map to zero.
std::vector<double> gaussian_second_derivative_kernel(double sigma);

/// Separable Gaussian blur with reflect padding. sigma = 0 is the identity.
Image gaussian_blur(const Image& img, double sigma);

/// Scale-normalized Laplacian of Gaussian, sign-flipped so that bright blobs
/// produce positive maxima: -sigma^2 * laplacian(G_sigma * img).
Image log_response(const Image& img, double sigma);

/// n values log-spaced on [lo, hi]; a single scale is lo.
std::vector<double> log_scales(double lo, double hi, int n);

}  // namespace rflow::imaging
