// 8-bit image export/import: PNG (zlib-backed) and PPM/PGM, selected by
// file extension, plus the figure-grid writer.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svlab/tensor.hpp"

namespace svlab {

struct ImageU8 {
  size_t h = 0, w = 0, c = 0;  // c is 1 (gray) or 3 (RGB)
  std::vector<uint8_t> pixels;
};

void write_png(const ImageU8& image, const std::string& path);
void write_ppm(const ImageU8& image, const std::string& path);
// Dispatches on extension: .png, .ppm, .pgm.
void write_image(const ImageU8& image, const std::string& path);

// Reads files produced by the writers above (8-bit gray/RGB PNG without
// interlacing, binary PPM/PGM).
ImageU8 load_image(const std::string& path);

// [H,W,C] tensor in [0,1]; 8-bit values divided by 255.
Tensor image_to_tensor(const ImageU8& image);
// Quantizes round(clamp(v,0,1)*255); accepts [H,W,C] or [N,H,W,C] with N=1.
ImageU8 tensor_to_image(const Tensor& t);

// Each row is an image stack [n,H,W,C]; all rows need equal n, H, W. Gray
// rows are promoted to RGB when mixed with color rows. Cells are separated
// by a mid-gray margin.
void export_grid(const std::vector<Tensor>& rows, const std::string& path, size_t margin = 2);

}  // namespace svlab
