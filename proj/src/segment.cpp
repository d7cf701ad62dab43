#include "htr/segment.hpp"

#include <algorithm>

#include "htr/errors.hpp"

namespace htr {

namespace {

// [begin, end) runs of profile bins above threshold, merged across gaps
// shorter than min_gap.
std::vector<std::pair<Index, Index>> runs(const Eigen::VectorXd& profile, Index min_gap, double threshold) {
  std::vector<std::pair<Index, Index>> out;
  if (profile.size() == 0) return out;
  const double peak = profile.maxCoeff();
  if (peak <= 0) return out;
  const double tau = threshold * peak;
  Index i = 0;
  const Index n = profile.size();
  while (i < n) {
    if (profile(i) <= tau) {
      ++i;
      continue;
    }
    Index j = i;
    while (j < n && profile(j) > tau) ++j;
    if (!out.empty() && i - out.back().second < min_gap) {
      out.back().second = j;
    } else {
      out.emplace_back(i, j);
    }
    i = j;
  }
  return out;
}

// Tight box around ink inside the given region, or the region itself if
// nothing passes the pixel threshold.
Box tighten(const RowMatrixXd& ink, Index x, Index y, Index w, Index h) {
  Index x0 = x + w, y0 = y + h, x1 = -1, y1 = -1;
  for (Index r = y; r < y + h; ++r) {
    for (Index c = x; c < x + w; ++c) {
      if (ink(r, c) > 0.5) {
        x0 = std::min(x0, c);
        x1 = std::max(x1, c);
        y0 = std::min(y0, r);
        y1 = std::max(y1, r);
      }
    }
  }
  if (x1 < 0) return {x, y, w, h};
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

void check_options(Index min_gap, double threshold) {
  if (min_gap < 1) throw ConfigError("segment: min_gap must be >= 1");
  if (!(threshold >= 0 && threshold < 1)) throw ConfigError("segment: threshold must be in [0, 1)");
}

}  // namespace

double iou(const Box& a, const Box& b) {
  const Index ix = std::max<Index>(0, std::min(a.right(), b.right()) - std::max(a.x, b.x));
  const Index iy = std::max<Index>(0, std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y));
  const double inter = static_cast<double>(ix * iy);
  const double uni = static_cast<double>(a.w * a.h + b.w * b.h) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

std::vector<Box> segment_lines(const GrayImage& img, Index min_gap_rows, double threshold) {
  check_options(min_gap_rows, threshold);
  const RowMatrixXd ink = img.ink();
  std::vector<Box> boxes;
  for (const auto& [top, bottom] : runs(ink.rowwise().sum(), min_gap_rows, threshold)) {
    boxes.push_back(tighten(ink, 0, top, img.width(), bottom - top));
  }
  return boxes;
}

std::vector<Box> segment_words(const GrayImage& line, Index min_gap_cols, double threshold) {
  check_options(min_gap_cols, threshold);
  const RowMatrixXd ink = line.ink();
  std::vector<Box> boxes;
  for (const auto& [left, right] : runs(ink.colwise().sum().transpose(), min_gap_cols, threshold)) {
    boxes.push_back(tighten(ink, left, 0, right - left, line.height()));
  }
  return boxes;
}

std::vector<LineSegments> segment_page(const GrayImage& page, const SegmentOptions& options) {
  std::vector<LineSegments> out;
  for (const Box& line : segment_lines(page, options.min_gap_rows, options.threshold)) {
    LineSegments seg{line, {}};
    for (Box word : segment_words(crop(page, line), options.min_gap_cols, options.threshold)) {
      word.x += line.x;
      word.y += line.y;
      seg.words.push_back(word);
    }
    out.push_back(std::move(seg));
  }
  return out;
}

GrayImage crop(const GrayImage& img, const Box& box) {
  if (box.x < 0 || box.y < 0 || box.w < 1 || box.h < 1 || box.right() > img.width() || box.bottom() > img.height()) {
    throw ContractError("crop: box outside image");
  }
  return GrayImage(RowMatrixXd(img.pixels().block(box.y, box.x, box.h, box.w)));
}

}  // namespace htr
