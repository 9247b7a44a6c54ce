#pragma once

#include <vector>

#include "cfcontra/tensor.hpp"

namespace cfcontra {

/// Pixels of image b of a [BxCxHxW] batch as an [(H*W) x C] matrix.
Tensor image_pixels(const Tensor& images, std::size_t b);
/// All pixels of a [BxCxHxW] batch as an [(B*H*W) x C] matrix, image-major.
Tensor batch_pixels(const Tensor& images, const std::vector<std::size_t>& which);
/// Inverse of image_pixels for a single image: [(H*W) x C] -> [1xCxHxW].
Tensor pixels_to_image(const Tensor& pixels, std::size_t height, std::size_t width);

}  // namespace cfcontra
