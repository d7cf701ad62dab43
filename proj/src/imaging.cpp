#include "htr/imaging.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <vector>

#include "htr/errors.hpp"
#include "htr/random.hpp"

namespace htr {

GrayImage::GrayImage(Index width, Index height, double fill) {
  if (width < 0 || height < 0) throw ContractError("GrayImage: negative size");
  pixels_ = RowMatrixXd::Constant(height, width, fill);
}

GrayImage::GrayImage(RowMatrixXd pixels) : pixels_(std::move(pixels)) {
  if (pixels_.size() && (pixels_.minCoeff() < 0.0 || pixels_.maxCoeff() > 1.0)) {
    throw ContractError("GrayImage: pixel values outside [0, 1]");
  }
}

double GrayImage::sample(double x, double y) const {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const Index x0 = static_cast<Index>(fx);
  const Index y0 = static_cast<Index>(fy);
  const double ax = x - fx;
  const double ay = y - fy;
  auto at = [&](Index xi, Index yi) {
    return xi < 0 || yi < 0 || xi >= width() || yi >= height() ? 1.0 : pixels_(yi, xi);
  };
  const double top = ax == 0 ? at(x0, y0) : at(x0, y0) * (1 - ax) + at(x0 + 1, y0) * ax;
  if (ay == 0) return top;
  const double bottom = ax == 0 ? at(x0, y0 + 1) : at(x0, y0 + 1) * (1 - ax) + at(x0 + 1, y0 + 1) * ax;
  return top * (1 - ay) + bottom * ay;
}

// ---- file formats ----

namespace {

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

unsigned char to_byte(double v) { return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

std::uint32_t be32(const unsigned char* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<unsigned char>(v >> shift));
}

constexpr std::array<unsigned char, 8> kPngSignature{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  return pb <= pc ? b : c;
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  const std::vector<unsigned char> bytes = read_bytes(path);
  std::size_t pos = 0;
  auto fail = [&](const std::string& why) { return IoError("PGM " + path.string() + ": " + why); };
  auto next_token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') tok += static_cast<char>(bytes[pos++]);
    if (tok.empty()) throw fail("truncated header");
    return tok;
  };
  if (next_token() != "P5") throw fail("not a binary PGM (P5)");
  long width = 0, height = 0, maxval = 0;
  try {
    width = std::stol(next_token());
    height = std::stol(next_token());
    maxval = std::stol(next_token());
  } catch (const std::logic_error&) {
    throw fail("malformed header");
  }
  if (width <= 0 || height <= 0) throw fail("non-positive size");
  if (maxval <= 0 || maxval > 255) throw fail("only 8-bit maxval supported");
  ++pos;  // single whitespace after maxval
  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() < pos + count) throw fail("truncated pixel data");
  GrayImage img(width, height);
  for (std::size_t i = 0; i < count; ++i) {
    img.pixels().data()[i] = std::min(1.0, bytes[pos + i] / static_cast<double>(maxval));
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  const std::string header = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  for (Index i = 0; i < img.pixels().size(); ++i) bytes.push_back(to_byte(img.pixels().data()[i]));
  write_bytes(path, bytes);
}

GrayImage read_png(const std::filesystem::path& path) {
  const std::vector<unsigned char> bytes = read_bytes(path);
  auto fail = [&](const std::string& why) { return IoError("PNG " + path.string() + ": " + why); };
  if (bytes.size() < 8 || !std::equal(kPngSignature.begin(), kPngSignature.end(), bytes.begin())) {
    throw fail("bad signature");
  }
  std::uint32_t width = 0, height = 0;
  int color_type = -1;
  std::vector<unsigned char> compressed;
  std::size_t pos = 8;
  bool seen_end = false;
  while (pos + 12 <= bytes.size() && !seen_end) {
    const std::uint32_t length = be32(&bytes[pos]);
    if (pos + 12 + length > bytes.size()) throw fail("truncated chunk");
    const std::string type(bytes.begin() + static_cast<long>(pos) + 4, bytes.begin() + static_cast<long>(pos) + 8);
    const unsigned char* data = &bytes[pos + 8];
    if (type == "IHDR") {
      if (length != 13) throw fail("bad IHDR");
      width = be32(data);
      height = be32(data + 4);
      const int bit_depth = data[8];
      color_type = data[9];
      if (bit_depth != 8) throw fail("only 8-bit depth supported");
      if (color_type != 0 && color_type != 2 && color_type != 4 && color_type != 6) {
        throw fail("unsupported color type " + std::to_string(color_type));
      }
      if (data[12] != 0) throw fail("interlaced images not supported");
    } else if (type == "IDAT") {
      compressed.insert(compressed.end(), data, data + length);
    } else if (type == "IEND") {
      seen_end = true;
    }
    pos += 12 + length;
  }
  if (color_type < 0 || width == 0 || height == 0) throw fail("missing IHDR");
  const std::size_t channels = color_type == 0 ? 1 : color_type == 4 ? 2 : color_type == 2 ? 3 : 4;
  const std::size_t stride = width * channels;
  std::vector<unsigned char> raw(height * (stride + 1));
  uLongf raw_size = raw.size();
  if (uncompress(raw.data(), &raw_size, compressed.data(), compressed.size()) != Z_OK || raw_size != raw.size()) {
    throw fail("corrupt image data");
  }

  std::vector<unsigned char> prev(stride, 0), cur(stride);
  GrayImage img(width, height);
  for (std::uint32_t y = 0; y < height; ++y) {
    const unsigned char* line = &raw[y * (stride + 1)];
    const int filter = line[0];
    for (std::size_t i = 0; i < stride; ++i) {
      const int a = i >= channels ? cur[i - channels] : 0;
      const int b = prev[i];
      const int c = i >= channels ? prev[i - channels] : 0;
      int pred = 0;
      switch (filter) {
        case 0: pred = 0; break;
        case 1: pred = a; break;
        case 2: pred = b; break;
        case 3: pred = (a + b) / 2; break;
        case 4: pred = paeth(a, b, c); break;
        default: throw fail("bad filter type");
      }
      cur[i] = static_cast<unsigned char>(line[1 + i] + pred);
    }
    for (std::uint32_t x = 0; x < width; ++x) {
      const unsigned char* px = &cur[x * channels];
      double gray = channels <= 2 ? px[0] : 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
      gray /= 255.0;
      if (channels == 2 || channels == 4) {
        const double alpha = px[channels - 1] / 255.0;
        gray = gray * alpha + (1 - alpha);
      }
      img(x, y) = std::clamp(gray, 0.0, 1.0);
    }
    std::swap(prev, cur);
  }
  return img;
}

void write_png(const std::filesystem::path& path, const GrayImage& img) {
  const std::size_t w = static_cast<std::size_t>(img.width());
  const std::size_t h = static_cast<std::size_t>(img.height());
  std::vector<unsigned char> raw;
  raw.reserve(h * (w + 1));
  for (std::size_t y = 0; y < h; ++y) {
    raw.push_back(0);
    for (std::size_t x = 0; x < w; ++x) raw.push_back(to_byte(img(static_cast<Index>(x), static_cast<Index>(y))));
  }
  uLongf packed_size = compressBound(raw.size());
  std::vector<unsigned char> packed(packed_size);
  if (compress2(packed.data(), &packed_size, raw.data(), raw.size(), 9) != Z_OK) throw IoError("PNG compression failed");
  packed.resize(packed_size);

  std::vector<unsigned char> out(kPngSignature.begin(), kPngSignature.end());
  auto chunk = [&](const char* type, const std::vector<unsigned char>& data) {
    put_be32(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    put_be32(out, static_cast<std::uint32_t>(crc32(0, &out[start], static_cast<uInt>(out.size() - start))));
  };
  std::vector<unsigned char> ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(w));
  put_be32(ihdr, static_cast<std::uint32_t>(h));
  ihdr.insert(ihdr.end(), {8, 0, 0, 0, 0});
  chunk("IHDR", ihdr);
  chunk("IDAT", packed);
  chunk("IEND", {});
  write_bytes(path, out);
}

GrayImage read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] == 'P' && magic[1] == '5') return read_pgm(path);
  if (static_cast<unsigned char>(magic[0]) == 0x89 && magic[1] == 'P') return read_png(path);
  throw IoError("unsupported image format: " + path.string());
}

GrayImage quantize8(const GrayImage& img) {
  GrayImage out = img;
  for (Index i = 0; i < out.pixels().size(); ++i) out.pixels().data()[i] = to_byte(out.pixels().data()[i]) / 255.0;
  return out;
}

// ---- geometry ----

GrayImage rotate(const GrayImage& img, double degrees) {
  const double rad = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double cx = (img.width() - 1) / 2.0, cy = (img.height() - 1) / 2.0;
  GrayImage out(img.width(), img.height());
  for (Index y = 0; y < img.height(); ++y) {
    for (Index x = 0; x < img.width(); ++x) {
      const double dx = x - cx, dy = y - cy;
      out(x, y) = img.sample(cx + dx * c - dy * s, cy + dx * s + dy * c);
    }
  }
  return out;
}

GrayImage shear(const GrayImage& img, double factor) {
  const double rise = static_cast<double>(std::max<Index>(0, img.height() - 1));
  const double offset = factor < 0 ? -factor * rise : 0.0;
  const Index width = img.width() + static_cast<Index>(std::ceil(std::abs(factor) * rise - 1e-9));
  GrayImage out(width, img.height());
  for (Index y = 0; y < img.height(); ++y) {
    const double shift = factor * (rise - y) + offset;
    for (Index x = 0; x < width; ++x) out(x, y) = img.sample(x - shift, y);
  }
  return out;
}

GrayImage affine(const GrayImage& img, const AffineParams& p) {
  if (p.scale_x <= 0 || p.scale_y <= 0) throw ContractError("affine: scales must be positive");
  const double cx = (img.width() - 1) / 2.0, cy = (img.height() - 1) / 2.0;
  double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
  bool first = true;
  for (double dx : {-cx, cx}) {
    for (double dy : {-cy, cy}) {
      const double x = p.scale_x * dx + p.shear * dy;
      const double y = p.scale_y * dy;
      min_x = first ? x : std::min(min_x, x);
      max_x = first ? x : std::max(max_x, x);
      min_y = first ? y : std::min(min_y, y);
      max_y = first ? y : std::max(max_y, y);
      first = false;
    }
  }
  const Index width = static_cast<Index>(std::lround(max_x - min_x)) + 1;
  const Index height = static_cast<Index>(std::lround(max_y - min_y)) + 1;
  GrayImage out(width, height);
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      const double ty = y + min_y - p.translate_y;
      const double tx = x + min_x - p.translate_x;
      const double dy = ty / p.scale_y;
      const double dx = (tx - p.shear * dy) / p.scale_x;
      out(x, y) = img.sample(cx + dx, cy + dy);
    }
  }
  return out;
}

AffineParams draw_augmentation(std::uint64_t seed, const AugmentRanges& r) {
  Rng rng(seed);
  AffineParams p;
  p.scale_x = rng.uniform(r.scale_x_min, r.scale_x_max);
  p.scale_y = rng.uniform(r.scale_y_min, r.scale_y_max);
  p.shear = rng.uniform(-r.shear_max, r.shear_max);
  p.translate_x = rng.uniform(-r.translate_max, r.translate_max);
  p.translate_y = rng.uniform(-r.translate_max, r.translate_max);
  return p;
}

GrayImage augment(const GrayImage& img, std::uint64_t seed, const AugmentRanges& ranges) {
  return affine(img, draw_augmentation(seed, ranges));
}

namespace {

// Row-stochastic (dst x src) resampling weights: area coverage when
// shrinking, linear interpolation when enlarging.
RowMatrixXd resample_weights(Index src, Index dst) {
  RowMatrixXd w = RowMatrixXd::Zero(dst, src);
  const double ratio = static_cast<double>(src) / static_cast<double>(dst);
  for (Index i = 0; i < dst; ++i) {
    if (ratio > 1.0) {
      const double lo = i * ratio, hi = (i + 1) * ratio;
      for (Index j = static_cast<Index>(std::floor(lo)); j < std::min<Index>(src, static_cast<Index>(std::ceil(hi))); ++j) {
        w(i, j) = std::min<double>(hi, j + 1) - std::max<double>(lo, j);
      }
      w.row(i) /= w.row(i).sum();
    } else {
      const double pos = std::clamp((i + 0.5) * ratio - 0.5, 0.0, static_cast<double>(src - 1));
      const Index j = static_cast<Index>(std::floor(pos));
      const double a = pos - j;
      w(i, j) += 1 - a;
      if (a > 0) w(i, j + 1) += a;
    }
  }
  return w;
}

}  // namespace

GrayImage resize(const GrayImage& img, Index width, Index height) {
  if (width < 1 || height < 1) throw ContractError("resize: target must be at least 1x1");
  if (img.empty()) throw ContractError("resize: empty image");
  if (width == img.width() && height == img.height()) return img;
  RowMatrixXd out = resample_weights(img.height(), height) * img.pixels() *
                    resample_weights(img.width(), width).transpose();
  return GrayImage(RowMatrixXd(out.cwiseMax(0.0).cwiseMin(1.0)));
}

GrayImage crop_to_ink(const GrayImage& img, Index margin, double threshold) {
  Index x0 = img.width(), y0 = img.height(), x1 = -1, y1 = -1;
  for (Index y = 0; y < img.height(); ++y) {
    for (Index x = 0; x < img.width(); ++x) {
      if (img(x, y) < threshold) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
    }
  }
  if (x1 < 0) return img;
  x0 = std::max<Index>(0, x0 - margin);
  y0 = std::max<Index>(0, y0 - margin);
  x1 = std::min(img.width() - 1, x1 + margin);
  y1 = std::min(img.height() - 1, y1 + margin);
  return GrayImage(RowMatrixXd(img.pixels().block(y0, x0, y1 - y0 + 1, x1 - x0 + 1)));
}

GrayImage median3x3(const GrayImage& img) {
  GrayImage out = img;
  std::array<double, 9> window;
  for (Index y = 0; y < img.height(); ++y) {
    for (Index x = 0; x < img.width(); ++x) {
      std::size_t k = 0;
      for (Index dy = -1; dy <= 1; ++dy) {
        for (Index dx = -1; dx <= 1; ++dx) {
          window[k++] = img(std::clamp<Index>(x + dx, 0, img.width() - 1), std::clamp<Index>(y + dy, 0, img.height() - 1));
        }
      }
      std::nth_element(window.begin(), window.begin() + 4, window.end());
      out(x, y) = window[4];
    }
  }
  return out;
}

// ---- preprocessing ----

DeskewResult deskew(const GrayImage& img, double max_angle_deg) {
  if (!(max_angle_deg >= 0 && max_angle_deg <= 45)) throw ContractError("deskew: max angle must be in [0, 45]");
  const RowMatrixXd ink = img.ink();
  struct Point {
    double dx, dy, w;
  };
  std::vector<Point> points;
  const double cx = (img.width() - 1) / 2.0, cy = (img.height() - 1) / 2.0;
  for (Index y = 0; y < img.height(); ++y) {
    for (Index x = 0; x < img.width(); ++x) {
      if (ink(y, x) > 0.05) points.push_back({x - cx, y - cy, ink(y, x)});
    }
  }
  if (points.empty()) return {img, 0.0};

  const double radius = std::hypot(cx, cy) + 2;
  const std::size_t bins = static_cast<std::size_t>(2 * radius) + 2;
  std::vector<double> profile(bins);
  const int steps = static_cast<int>(std::floor(max_angle_deg / 0.5 + 1e-9));
  double best_angle = 0, best_score = -1;
  // Visit 0, +0.5, -0.5, +1, ... so ties keep the smallest correction.
  for (int k = 0; k <= 2 * steps; ++k) {
    const int step = (k + 1) / 2 * (k % 2 ? 1 : -1);
    const double angle = 0.5 * step;
    const double rad = angle * std::numbers::pi / 180.0;
    const double s = std::sin(rad), c = std::cos(rad);
    std::fill(profile.begin(), profile.end(), 0.0);
    for (const Point& p : points) {
      const double row = p.dx * s + p.dy * c + radius;
      const double lo = std::floor(row);
      const double frac = row - lo;
      const std::size_t b = static_cast<std::size_t>(lo);
      profile[b] += p.w * (1 - frac);
      profile[b + 1] += p.w * frac;
    }
    double score = 0;
    for (double v : profile) score += v * v;
    if (score > best_score * (1 + 1e-12)) {
      best_score = score;
      best_angle = angle;
    }
  }
  if (best_angle == 0) return {img, 0.0};
  return {rotate(img, -best_angle), best_angle};
}

DeslantResult deslant(const GrayImage& img) {
  const Index h = img.height();
  const double rise = static_cast<double>(std::max<Index>(0, h - 1));
  std::vector<std::pair<Index, Index>> ink_pixels;
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < img.width(); ++x) {
      if (img(x, y) < 0.5) ink_pixels.emplace_back(x, y);
    }
  }
  if (ink_pixels.empty()) return {img, 0.0};

  struct Column {
    Index count = 0, top = 0, bottom = 0;
  };
  std::vector<Column> columns;
  double best_shear = 0, best_score = -1;
  for (int k = 0; k <= 20; ++k) {
    const int step = (k + 1) / 2 * (k % 2 ? 1 : -1);
    const double s = step / 10.0;
    const double offset = s < 0 ? -s * rise : 0.0;
    columns.assign(static_cast<std::size_t>(img.width() + static_cast<Index>(std::ceil(std::abs(s) * rise)) + 2), {});
    for (const auto& [x, y] : ink_pixels) {
      const Index col = static_cast<Index>(std::lround(x + s * (rise - y) + offset));
      Column& c = columns[static_cast<std::size_t>(col)];
      if (c.count == 0) {
        c.top = c.bottom = y;
      } else {
        c.top = std::min(c.top, y);
        c.bottom = std::max(c.bottom, y);
      }
      ++c.count;
    }
    double score = 0;
    for (const Column& c : columns) {
      if (c.count > 0 && c.bottom - c.top + 1 == c.count) score += static_cast<double>(c.count * c.count);
    }
    if (score > best_score) {
      best_score = score;
      best_shear = s;
    }
  }
  if (best_shear == 0) return {img, 0.0};
  return {shear(img, best_shear), best_shear};
}

double column_peakedness(const GrayImage& img) {
  const Eigen::RowVectorXd cols = img.ink().colwise().sum();
  const double total = cols.sum();
  if (total <= 0) return 0.0;
  return cols.squaredNorm() / (total * total);
}

GrayImage fit_to_canvas(const GrayImage& img, Index target_w, Index target_h) {
  if (img.empty()) throw ContractError("normalize: empty image");
  if (target_w < 1 || target_h < 1) throw ContractError("normalize: target must be at least 1x1");
  const double scale = std::min(static_cast<double>(target_w) / static_cast<double>(img.width()),
                                static_cast<double>(target_h) / static_cast<double>(img.height()));
  const Index w = std::clamp<Index>(std::lround(img.width() * scale), 1, target_w);
  const Index h = std::clamp<Index>(std::lround(img.height() * scale), 1, target_h);
  GrayImage canvas(target_w, target_h);
  canvas.pixels().topLeftCorner(h, w) = resize(img, w, h).pixels();
  return canvas;
}

RowMatrixXd normalize_to_model(const GrayImage& img, Index target_w, Index target_h) {
  RowMatrixXd m = fit_to_canvas(img, target_w, target_h).pixels();
  const double mean = m.mean();
  m.array() -= mean;
  const double stddev = std::sqrt(m.squaredNorm() / static_cast<double>(m.size()));
  if (stddev > 1e-12) m /= stddev;
  return m;
}

// ---- drawing ----

void draw_segment(GrayImage& img, double x0, double y0, double x1, double y1, double width, double ink) {
  const double r = width / 2;
  const Index left = std::max<Index>(0, static_cast<Index>(std::floor(std::min(x0, x1) - r - 1)));
  const Index right = std::min(img.width() - 1, static_cast<Index>(std::ceil(std::max(x0, x1) + r + 1)));
  const Index top = std::max<Index>(0, static_cast<Index>(std::floor(std::min(y0, y1) - r - 1)));
  const Index bottom = std::min(img.height() - 1, static_cast<Index>(std::ceil(std::max(y0, y1) + r + 1)));
  const double vx = x1 - x0, vy = y1 - y0;
  const double len2 = vx * vx + vy * vy;
  for (Index y = top; y <= bottom; ++y) {
    for (Index x = left; x <= right; ++x) {
      const double t = len2 > 0 ? std::clamp(((x - x0) * vx + (y - y0) * vy) / len2, 0.0, 1.0) : 0.0;
      const double d = std::hypot(x - (x0 + t * vx), y - (y0 + t * vy));
      const double cover = std::clamp(r + 0.5 - d, 0.0, 1.0);
      if (cover > 0) img(x, y) = std::min(img(x, y), 1 - cover * (1 - ink));
    }
  }
}

}  // namespace htr
