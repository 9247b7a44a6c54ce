#include "cfcontra/image.hpp"

#include "cfcontra/errors.hpp"

namespace cfcontra {

namespace {

void require_images(const Tensor& images) {
  if (images.rank() != 4) throw DimensionError("expected [BxCxHxW] images, got " + shape_string(images.shape));
}

}  // namespace

Tensor image_pixels(const Tensor& images, std::size_t b) { return batch_pixels(images, {b}); }

Tensor batch_pixels(const Tensor& images, const std::vector<std::size_t>& which) {
  require_images(images);
  const std::size_t c = images.shape[1], hw = images.shape[2] * images.shape[3];
  Tensor out = Tensor::zeros({which.size() * hw, c});
  for (std::size_t k = 0; k < which.size(); ++k) {
    const std::size_t b = which[k];
    if (b >= images.shape[0]) throw DimensionError("image index " + std::to_string(b) + " out of range");
    const double* src = images.values.data() + b * c * hw;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < hw; ++p) out.values[(k * hw + p) * c + ch] = src[ch * hw + p];
  }
  return out;
}

Tensor pixels_to_image(const Tensor& pixels, std::size_t height, std::size_t width) {
  const std::size_t hw = height * width, c = pixels.cols();
  if (pixels.rows() != hw) {
    throw DimensionError("pixel matrix " + shape_string(pixels.shape) + " does not fit " + std::to_string(height) +
                         "x" + std::to_string(width));
  }
  Tensor out = Tensor::zeros({1, c, height, width});
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t ch = 0; ch < c; ++ch) out.values[ch * hw + p] = pixels.values[p * c + ch];
  return out;
}

}  // namespace cfcontra
