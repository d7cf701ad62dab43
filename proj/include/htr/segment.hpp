#pragma once

#include <vector>

#include "htr/imaging.hpp"

namespace htr {

struct Box {
  Index x = 0, y = 0, w = 0, h = 0;

  Index right() const { return x + w; }
  Index bottom() const { return y + h; }
  bool operator==(const Box&) const = default;
};

double iou(const Box& a, const Box& b);

struct SegmentOptions {
  /// Profile bins below threshold * max count as gaps.
  double threshold = 0.02;
  Index min_gap_rows = 3;
  Index min_gap_cols = 6;
};

/// Line boxes from the horizontal ink projection, top to bottom. Runs of ink
/// rows separated by fewer than `min_gap_rows` gap rows are merged. Boxes
/// are tight around the ink of each line.
std::vector<Box> segment_lines(const GrayImage& img, Index min_gap_rows = 3, double threshold = 0.02);

/// Word boxes from the vertical ink projection of one line, left to right.
std::vector<Box> segment_words(const GrayImage& line, Index min_gap_cols = 6, double threshold = 0.02);

struct LineSegments {
  Box line;
  std::vector<Box> words;  // page coordinates
};

/// Lines, then words inside each line, all in page coordinates.
std::vector<LineSegments> segment_page(const GrayImage& page, const SegmentOptions& options = {});

GrayImage crop(const GrayImage& img, const Box& box);

}  // namespace htr
