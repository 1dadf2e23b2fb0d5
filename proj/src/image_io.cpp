#include "svlab/image_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace svlab {

namespace {

const uint8_t kPngSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

void be32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

void write_chunk(std::ostream& out, const char type[4], const std::vector<uint8_t>& data) {
  std::vector<uint8_t> header;
  be32(header, static_cast<uint32_t>(data.size()));
  out.write(reinterpret_cast<const char*>(header.data()), 4);
  out.write(type, 4);
  if (!data.empty()) out.write(reinterpret_cast<const char*>(data.data()), data.size());
  uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(type), 4);
  if (!data.empty()) crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
  std::vector<uint8_t> tail;
  be32(tail, static_cast<uint32_t>(crc));
  out.write(reinterpret_cast<const char*>(tail.data()), 4);
}

void validate(const ImageU8& image, const char* what) {
  if (image.c != 1 && image.c != 3) {
    throw std::invalid_argument(std::string(what) + ": channel count must be 1 or 3");
  }
  if (image.pixels.size() != image.h * image.w * image.c) {
    throw std::invalid_argument(std::string(what) + ": pixel buffer size mismatch");
  }
}

uint32_t read_be32(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

uint8_t paeth(uint8_t a, uint8_t b, uint8_t c) {
  const int p = int(a) + int(b) - int(c);
  const int pa = std::abs(p - int(a)), pb = std::abs(p - int(b)), pc = std::abs(p - int(c));
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

ImageU8 load_png(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_image: cannot open " + path);
  std::vector<uint8_t> file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (file.size() < 8 || std::memcmp(file.data(), kPngSignature, 8) != 0) {
    throw std::runtime_error("load_image: " + path + " is not a PNG file");
  }

  ImageU8 image;
  std::vector<uint8_t> idat;
  size_t at = 8;
  uint8_t bit_depth = 0, color_type = 0;
  while (at + 8 <= file.size()) {
    const uint32_t len = read_be32(&file[at]);
    const char* type = reinterpret_cast<const char*>(&file[at + 4]);
    if (at + 12 + len > file.size()) throw std::runtime_error("load_image: truncated PNG chunk");
    const uint8_t* data = &file[at + 8];
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw std::runtime_error("load_image: bad IHDR");
      image.w = read_be32(data);
      image.h = read_be32(data + 4);
      bit_depth = data[8];
      color_type = data[9];
      if (data[12] != 0) throw std::runtime_error("load_image: interlaced PNG unsupported");
      if (bit_depth != 8 || (color_type != 0 && color_type != 2)) {
        throw std::runtime_error("load_image: only 8-bit gray/RGB PNG supported");
      }
      image.c = color_type == 0 ? 1 : 3;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    at += 12 + len;
  }
  if (image.w == 0 || image.h == 0 || idat.empty()) {
    throw std::runtime_error("load_image: missing PNG image data");
  }

  const size_t row_bytes = image.w * image.c;
  std::vector<uint8_t> raw((row_bytes + 1) * image.h);
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != raw.size()) {
    throw std::runtime_error("load_image: PNG inflate failed");
  }

  image.pixels.resize(row_bytes * image.h);
  const size_t bpp = image.c;
  for (size_t y = 0; y < image.h; ++y) {
    const uint8_t filter = raw[y * (row_bytes + 1)];
    const uint8_t* src = &raw[y * (row_bytes + 1) + 1];
    uint8_t* dst = &image.pixels[y * row_bytes];
    const uint8_t* up = y > 0 ? &image.pixels[(y - 1) * row_bytes] : nullptr;
    for (size_t x = 0; x < row_bytes; ++x) {
      const uint8_t left = x >= bpp ? dst[x - bpp] : 0;
      const uint8_t above = up ? up[x] : 0;
      const uint8_t corner = (up && x >= bpp) ? up[x - bpp] : 0;
      switch (filter) {
        case 0: dst[x] = src[x]; break;
        case 1: dst[x] = static_cast<uint8_t>(src[x] + left); break;
        case 2: dst[x] = static_cast<uint8_t>(src[x] + above); break;
        case 3: dst[x] = static_cast<uint8_t>(src[x] + (left + above) / 2); break;
        case 4: dst[x] = static_cast<uint8_t>(src[x] + paeth(left, above, corner)); break;
        default: throw std::runtime_error("load_image: unknown PNG filter");
      }
    }
  }
  return image;
}

ImageU8 load_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_image: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P6") {
    throw std::runtime_error("load_image: " + path + " is not a binary PGM/PPM file");
  }
  size_t w, h;
  int maxval;
  in >> w >> h >> maxval;
  if (!in || maxval != 255) throw std::runtime_error("load_image: unsupported PNM header");
  in.get();  // single whitespace after maxval
  ImageU8 image;
  image.w = w;
  image.h = h;
  image.c = magic == "P5" ? 1 : 3;
  image.pixels.resize(w * h * image.c);
  in.read(reinterpret_cast<char*>(image.pixels.data()),
          static_cast<std::streamsize>(image.pixels.size()));
  if (static_cast<size_t>(in.gcount()) != image.pixels.size()) {
    throw std::runtime_error("load_image: truncated PNM payload");
  }
  return image;
}

std::string extension_of(const std::string& path) {
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  std::string ext = path.substr(dot + 1);
  for (char& ch : ext) ch = static_cast<char>(std::tolower(ch));
  return ext;
}

}  // namespace

void write_png(const ImageU8& image, const std::string& path) {
  validate(image, "write_png");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_png: cannot open " + path);
  out.write(reinterpret_cast<const char*>(kPngSignature), 8);

  std::vector<uint8_t> ihdr;
  be32(ihdr, static_cast<uint32_t>(image.w));
  be32(ihdr, static_cast<uint32_t>(image.h));
  ihdr.push_back(8);                                  // bit depth
  ihdr.push_back(image.c == 1 ? 0 : 2);               // color type
  ihdr.push_back(0);                                  // compression
  ihdr.push_back(0);                                  // filter method
  ihdr.push_back(0);                                  // no interlace
  write_chunk(out, "IHDR", ihdr);

  const size_t row_bytes = image.w * image.c;
  std::vector<uint8_t> raw((row_bytes + 1) * image.h);
  for (size_t y = 0; y < image.h; ++y) {
    raw[y * (row_bytes + 1)] = 0;  // filter: none
    std::memcpy(&raw[y * (row_bytes + 1) + 1], &image.pixels[y * row_bytes], row_bytes);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) !=
      Z_OK) {
    throw std::runtime_error("write_png: deflate failed");
  }
  compressed.resize(bound);
  write_chunk(out, "IDAT", compressed);
  write_chunk(out, "IEND", {});
  if (!out) throw std::runtime_error("write_png: write failed for " + path);
}

void write_ppm(const ImageU8& image, const std::string& path) {
  validate(image, "write_ppm");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_ppm: cannot open " + path);
  out << (image.c == 1 ? "P5" : "P6") << "\n" << image.w << " " << image.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw std::runtime_error("write_ppm: write failed for " + path);
}

void write_image(const ImageU8& image, const std::string& path) {
  const std::string ext = extension_of(path);
  if (ext == "png") {
    write_png(image, path);
  } else if (ext == "ppm" || ext == "pgm") {
    write_ppm(image, path);
  } else {
    throw std::invalid_argument("write_image: unsupported extension '" + ext + "' (png/ppm/pgm)");
  }
}

ImageU8 load_image(const std::string& path) {
  const std::string ext = extension_of(path);
  if (ext == "png") return load_png(path);
  if (ext == "ppm" || ext == "pgm") return load_pnm(path);
  throw std::invalid_argument("load_image: unsupported extension '" + ext + "'");
}

Tensor image_to_tensor(const ImageU8& image) {
  std::vector<double> values(image.pixels.size());
  for (size_t i = 0; i < values.size(); ++i) {
    values[i] = static_cast<double>(image.pixels[i]) / 255.0;
  }
  return Tensor::from_values({image.h, image.w, image.c}, std::move(values));
}

namespace {

uint8_t quantize(double v) {
  const double clamped = std::min(1.0, std::max(0.0, v));
  return static_cast<uint8_t>(std::lround(clamped * 255.0));
}

}  // namespace

ImageU8 tensor_to_image(const Tensor& t) {
  Shape shape = t.shape();
  if (shape.size() == 4 && shape[0] == 1) shape.erase(shape.begin());
  if (shape.size() != 3 || (shape[2] != 1 && shape[2] != 3)) {
    throw std::invalid_argument("tensor_to_image: expected [H,W,1|3], got " +
                                shape_str(t.shape()));
  }
  ImageU8 image;
  image.h = shape[0];
  image.w = shape[1];
  image.c = shape[2];
  image.pixels.resize(t.size());
  for (size_t i = 0; i < t.size(); ++i) image.pixels[i] = quantize(t.values()[i]);
  return image;
}

void export_grid(const std::vector<Tensor>& rows, const std::string& path, size_t margin) {
  if (rows.empty()) throw std::invalid_argument("export_grid: no rows");
  size_t n = 0, h = 0, w = 0, out_c = 1;
  for (size_t r = 0; r < rows.size(); ++r) {
    const Tensor& row = rows[r];
    if (row.ndim() != 4) {
      throw std::invalid_argument("export_grid: rows must be [n,H,W,C] stacks");
    }
    if (r == 0) {
      n = row.dim(0);
      h = row.dim(1);
      w = row.dim(2);
    } else if (row.dim(0) != n || row.dim(1) != h || row.dim(2) != w) {
      throw std::invalid_argument("export_grid: mixed image counts or sizes between rows");
    }
    if (row.dim(3) != 1 && row.dim(3) != 3) {
      throw std::invalid_argument("export_grid: images must have 1 or 3 channels");
    }
    if (row.dim(3) == 3) out_c = 3;
  }

  ImageU8 grid;
  grid.c = out_c;
  grid.h = rows.size() * h + (rows.size() + 1) * margin;
  grid.w = n * w + (n + 1) * margin;
  grid.pixels.assign(grid.h * grid.w * out_c, quantize(0.5));

  for (size_t r = 0; r < rows.size(); ++r) {
    const Tensor& row = rows[r];
    const size_t c = row.dim(3);
    const size_t y0 = margin + r * (h + margin);
    for (size_t i = 0; i < n; ++i) {
      const size_t x0 = margin + i * (w + margin);
      for (size_t y = 0; y < h; ++y) {
        for (size_t x = 0; x < w; ++x) {
          uint8_t* dst = &grid.pixels[((y0 + y) * grid.w + (x0 + x)) * out_c];
          if (c == out_c) {
            for (size_t ch = 0; ch < c; ++ch) dst[ch] = quantize(row.at({i, y, x, ch}));
          } else {
            // gray row in an RGB grid
            const uint8_t v = quantize(row.at({i, y, x, 0}));
            for (size_t ch = 0; ch < out_c; ++ch) dst[ch] = v;
          }
        }
      }
    }
  }
  write_image(grid, path);
}

}  // namespace svlab
