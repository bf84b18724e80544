#include "gazefield/io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace gazefield {

namespace {

uint8_t to_byte(double v) {
  double q = v * 255.0 + 0.5;
  if (q < 0.0) q = 0.0;
  if (q > 255.0) q = 255.0;
  return static_cast<uint8_t>(q);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  return f;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  return f;
}

void read_pnm_header(std::ifstream& f, const std::string& magic, int& h, int& w) {
  std::string m;
  int maxval = 0;
  f >> m >> w >> h >> maxval;
  if (m != magic || maxval != 255) throw std::runtime_error("unsupported PNM header");
  f.get();  // single whitespace before raster
}

}  // namespace

void write_ppm(const std::string& path, const Tensor<double>& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw std::invalid_argument("write_ppm: expected [3,H,W]");
  int64_t h = image.dim(1), w = image.dim(2);
  auto f = open_out(path);
  f << "P6\n" << w << " " << h << "\n255\n";
  std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j)
      for (int c = 0; c < 3; ++c) row[static_cast<size_t>(j * 3 + c)] = to_byte(image.at(c, i, j));
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
}

Tensor<double> read_ppm(const std::string& path) {
  auto f = open_in(path);
  int h = 0, w = 0;
  read_pnm_header(f, "P6", h, w);
  Tensor<double> img({3, h, w});
  std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
  for (int i = 0; i < h; ++i) {
    f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    for (int j = 0; j < w; ++j)
      for (int c = 0; c < 3; ++c) img.at(c, i, j) = row[static_cast<size_t>(j * 3 + c)] / 255.0;
  }
  if (!f) throw std::runtime_error("truncated PPM: " + path);
  return img;
}

void write_pgm(const std::string& path, const Tensor<double>& mask) {
  if (mask.rank() != 2) throw std::invalid_argument("write_pgm: expected [H,W]");
  int64_t h = mask.dim(0), w = mask.dim(1);
  auto f = open_out(path);
  f << "P5\n" << w << " " << h << "\n255\n";
  std::vector<uint8_t> row(static_cast<size_t>(w));
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) row[static_cast<size_t>(j)] = to_byte(mask.at(i, j));
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
}

Tensor<double> read_pgm(const std::string& path) {
  auto f = open_in(path);
  int h = 0, w = 0;
  read_pnm_header(f, "P5", h, w);
  Tensor<double> mask({h, w});
  std::vector<uint8_t> row(static_cast<size_t>(w));
  for (int i = 0; i < h; ++i) {
    f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    for (int j = 0; j < w; ++j) mask.at(i, j) = row[static_cast<size_t>(j)] / 255.0;
  }
  if (!f) throw std::runtime_error("truncated PGM: " + path);
  return mask;
}

void write_depth(const std::string& path, const Tensor<double>& depth) {
  if (depth.rank() != 2) throw std::invalid_argument("write_depth: expected [H,W]");
  auto f = open_out(path);
  const char magic[4] = {'G', 'F', 'D', 'P'};
  uint32_t version = 1, h = static_cast<uint32_t>(depth.dim(0)), w = static_cast<uint32_t>(depth.dim(1));
  f.write(magic, 4);
  f.write(reinterpret_cast<const char*>(&version), 4);
  f.write(reinterpret_cast<const char*>(&h), 4);
  f.write(reinterpret_cast<const char*>(&w), 4);
  std::vector<float> buf(static_cast<size_t>(depth.size()));
  for (int64_t i = 0; i < depth.size(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(depth[i]);
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
}

Tensor<double> read_depth(const std::string& path) {
  auto f = open_in(path);
  char magic[4];
  uint32_t version = 0, h = 0, w = 0;
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(&version), 4);
  f.read(reinterpret_cast<char*>(&h), 4);
  f.read(reinterpret_cast<char*>(&w), 4);
  if (!f || std::memcmp(magic, "GFDP", 4) != 0 || version != 1)
    throw std::runtime_error("bad depth file header: " + path);
  Tensor<double> depth({static_cast<int64_t>(h), static_cast<int64_t>(w)});
  std::vector<float> buf(static_cast<size_t>(depth.size()));
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  if (!f) throw std::runtime_error("truncated depth file: " + path);
  for (int64_t i = 0; i < depth.size(); ++i) depth[i] = buf[static_cast<size_t>(i)];
  return depth;
}

}  // namespace gazefield
