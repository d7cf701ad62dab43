#include <cmath>
#include <map>

#include "htr/data.hpp"
#include "htr/errors.hpp"
#include "htr/random.hpp"
#include "htr/text.hpp"

namespace htr {

namespace {

struct Point {
  double x, y;
};
using Stroke = std::vector<Point>;
using Glyph = std::vector<Stroke>;

// Capital letters on a 4 x 6 grid: y = 0 is the cap line, y = 6 the
// baseline; descenders reach y = 7 and diacritics sit above y = 0.
const std::map<char32_t, Glyph>& capitals() {
  static const std::map<char32_t, Glyph> glyphs = [] {
    const Stroke o{{1, 0}, {3, 0}, {4, 1}, {4, 5}, {3, 6}, {1, 6}, {0, 5}, {0, 1}, {1, 0}};
    const Stroke lower_bowl{{0, 3}, {3, 3}, {4, 4}, {4, 5}, {3, 6}, {0, 6}};
    std::map<char32_t, Glyph> g;
    g[U'А'] = {{{0, 6}, {2, 0}, {4, 6}}, {{1, 3.5}, {3, 3.5}}};
    g[U'Б'] = {{{4, 0}, {0, 0}, {0, 6}, {3, 6}, {4, 5}, {4, 4}, {3, 3}, {0, 3}}};
    g[U'В'] = {{{0, 0}, {0, 6}}, {{0, 0}, {3, 0}, {4, 1}, {4, 2}, {3, 3}, {0, 3}}, lower_bowl};
    g[U'Г'] = {{{4, 0}, {0, 0}, {0, 6}}};
    g[U'Д'] = {{{1, 0}, {3.5, 0}, {3.5, 6}}, {{1, 0}, {0.5, 6}}, {{0, 7}, {0, 6}, {4.2, 6}, {4.2, 7}}};
    g[U'Е'] = {{{4, 0}, {0, 0}, {0, 6}, {4, 6}}, {{0, 3}, {3, 3}}};
    g[U'Ё'] = {{{4, 0}, {0, 0}, {0, 6}, {4, 6}}, {{0, 3}, {3, 3}}, {{1, -1.5}, {1.3, -1.5}}, {{2.7, -1.5}, {3, -1.5}}};
    g[U'Ж'] = {{{2, 0}, {2, 6}}, {{0, 0}, {2, 3}, {4, 0}}, {{0, 6}, {2, 3}, {4, 6}}};
    g[U'З'] = {{{0, 1}, {1, 0}, {3, 0}, {4, 1}, {4, 2}, {3, 3}, {4, 4}, {4, 5}, {3, 6}, {1, 6}, {0, 5}},
               {{1.5, 3}, {3, 3}}};
    g[U'И'] = {{{0, 0}, {0, 6}, {4, 0}, {4, 6}}};
    g[U'Й'] = {{{0, 0}, {0, 6}, {4, 0}, {4, 6}}, {{1, -1.5}, {2, -0.8}, {3, -1.5}}};
    g[U'К'] = {{{0, 0}, {0, 6}}, {{4, 0}, {0, 3}, {4, 6}}};
    g[U'Л'] = {{{0, 6}, {1.5, 0}, {4, 0}, {4, 6}}};
    g[U'М'] = {{{0, 6}, {0, 0}, {2, 4}, {4, 0}, {4, 6}}};
    g[U'Н'] = {{{0, 0}, {0, 6}}, {{4, 0}, {4, 6}}, {{0, 3}, {4, 3}}};
    g[U'О'] = {o};
    g[U'П'] = {{{0, 6}, {0, 0}, {4, 0}, {4, 6}}};
    g[U'Р'] = {{{0, 6}, {0, 0}, {3, 0}, {4, 1}, {4, 2}, {3, 3}, {0, 3}}};
    g[U'С'] = {{{4, 1}, {3, 0}, {1, 0}, {0, 1}, {0, 5}, {1, 6}, {3, 6}, {4, 5}}};
    g[U'Т'] = {{{0, 0}, {4, 0}}, {{2, 0}, {2, 6}}};
    g[U'У'] = {{{0, 0}, {2, 3.5}}, {{4, 0}, {1, 6}}};
    g[U'Ф'] = {{{2, 0}, {2, 6}}, {{1, 1}, {3, 1}, {4, 2}, {4, 3}, {3, 4}, {1, 4}, {0, 3}, {0, 2}, {1, 1}}};
    g[U'Х'] = {{{0, 0}, {4, 6}}, {{4, 0}, {0, 6}}};
    g[U'Ц'] = {{{0, 0}, {0, 6}, {3.5, 6}, {3.5, 0}}, {{3.5, 6}, {4.3, 6}, {4.3, 7}}};
    g[U'Ч'] = {{{0, 0}, {0, 2}, {1, 3}, {4, 3}}, {{4, 0}, {4, 6}}};
    g[U'Ш'] = {{{0, 0}, {0, 6}, {4, 6}, {4, 0}}, {{2, 0}, {2, 6}}};
    g[U'Щ'] = {{{0, 0}, {0, 6}, {4, 6}, {4, 0}}, {{2, 0}, {2, 6}}, {{4, 6}, {4.7, 6}, {4.7, 7}}};
    g[U'Ъ'] = {{{0, 0}, {1, 0}, {1, 6}}, {{1, 3}, {3, 3}, {4, 4}, {4, 5}, {3, 6}, {1, 6}}};
    g[U'Ы'] = {{{0, 0}, {0, 6}, {2, 6}, {3, 5}, {3, 4}, {2, 3}, {0, 3}}, {{4, 0}, {4, 6}}};
    g[U'Ь'] = {{{0, 0}, {0, 6}}, lower_bowl};
    g[U'Э'] = {{{0, 1}, {1, 0}, {3, 0}, {4, 1}, {4, 5}, {3, 6}, {1, 6}, {0, 5}}, {{1.5, 3}, {4, 3}}};
    g[U'Ю'] = {{{0, 0}, {0, 6}},
               {{0, 3}, {1.5, 3}},
               {{2.5, 0}, {3.5, 0}, {4, 1}, {4, 5}, {3.5, 6}, {2.5, 6}, {1.5, 5}, {1.5, 1}, {2.5, 0}}};
    g[U'Я'] = {{{4, 6}, {4, 0}, {1, 0}, {0, 1}, {0, 2}, {1, 3}, {4, 3}}, {{1, 3}, {0, 6}}};
    g[U'Ә'] = {{{0, 1}, {1, 0}, {3, 0}, {4, 1}, {4, 5}, {3, 6}, {1, 6}, {0, 5}, {0, 3}, {4, 3}}};
    g[U'Ғ'] = {{{4, 0}, {0, 0}, {0, 6}}, {{-0.8, 3}, {1.6, 3}}};
    g[U'Қ'] = {{{0, 0}, {0, 6}}, {{4, 0}, {0, 3}, {4, 6}}, {{4, 6}, {4.6, 6}, {4.6, 7}}};
    g[U'Ң'] = {{{0, 0}, {0, 6}}, {{4, 0}, {4, 6}}, {{0, 3}, {4, 3}}, {{4, 6}, {4.6, 6}, {4.6, 7}}};
    g[U'Ө'] = {o, {{0, 3}, {4, 3}}};
    g[U'Ұ'] = {{{0, 0}, {2, 3}, {4, 0}}, {{2, 3}, {2, 6}}, {{0.8, 4.2}, {3.2, 4.2}}};
    g[U'Ү'] = {{{0, 0}, {2, 3}, {4, 0}}, {{2, 3}, {2, 6}}};
    g[U'Һ'] = {{{0, 0}, {0, 6}}, {{0, 3}, {3, 3}, {4, 4}, {4, 6}}};
    g[U'І'] = {{{2, 0}, {2, 6}}};
    return g;
  }();
  return glyphs;
}

constexpr std::u32string_view kLower = U"абвгдеёжзийклмнопрстуфхцчшщъыьэюяәғқңөұүһі";
constexpr std::u32string_view kUpper = U"АБВГДЕЁЖЗИЙКЛМНОПРСТУФХЦЧШЩЪЫЬЭЮЯӘҒҚҢӨҰҮҺІ";

constexpr double kAdvance = 4.0;
constexpr double kSpaceAdvance = 4.0;

// Lowercase letters reuse the capital shape at 2/3 height on the baseline.
Glyph lowercase(char32_t upper) {
  if (upper == U'І') return {{{2, 2.6}, {2, 6}}, {{2, 1}, {2, 1.3}}};
  Glyph g = capitals().at(upper);
  for (Stroke& s : g) {
    for (Point& p : s) p.y = 6 - (6 - p.y) * 2.0 / 3.0;
  }
  return g;
}

const Glyph* find_glyph(char32_t c) {
  static const std::map<char32_t, Glyph> all = [] {
    std::map<char32_t, Glyph> m = capitals();
    for (std::size_t i = 0; i < kLower.size(); ++i) m[kLower[i]] = lowercase(kUpper[i]);
    return m;
  }();
  const auto it = all.find(c);
  return it == all.end() ? nullptr : &it->second;
}

}  // namespace

bool has_glyph(char32_t c) { return c == U' ' || find_glyph(c) != nullptr; }

GrayImage render_text(std::string_view text, const RenderOptions& o) {
  const std::u32string cps = to_u32(nfc(text));
  double width_units = 0;
  for (std::size_t i = 0; i < cps.size(); ++i) {
    if (!has_glyph(cps[i])) {
      throw EncodeError("font: no glyph for '" + to_utf8(cps[i]) + "' at position " + std::to_string(i));
    }
    width_units += (cps[i] == U' ' ? kSpaceAdvance : kAdvance) + (i + 1 < cps.size() ? o.spacing : 0);
  }
  // Room for diacritics above, descenders below and ascender overhang left.
  const double top_units = 2.0, bottom_units = 1.5, left_units = 1.0;
  const Index width = static_cast<Index>(std::ceil((width_units + left_units + 1.0) * o.unit + 2 * o.margin));
  const Index height = static_cast<Index>(std::ceil((6 + top_units + bottom_units) * o.unit + 2 * o.margin));
  GrayImage img(std::max<Index>(width, 1), height);
  Rng rng(o.seed);
  double pen = left_units;
  for (char32_t c : cps) {
    if (c == U' ') {
      pen += kSpaceAdvance + o.spacing;
      continue;
    }
    for (const Stroke& stroke : *find_glyph(c)) {
      std::vector<Point> pts;
      for (const Point& p : stroke) {
        const double jx = o.jitter > 0 ? rng.uniform(-o.jitter, o.jitter) : 0.0;
        const double jy = o.jitter > 0 ? rng.uniform(-o.jitter, o.jitter) : 0.0;
        pts.push_back({o.margin + (pen + p.x + jx) * o.unit, o.margin + (top_units + p.y + jy) * o.unit});
      }
      if (pts.size() == 1) pts.push_back(pts.front());
      for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        draw_segment(img, pts[i].x, pts[i].y, pts[i + 1].x, pts[i + 1].y, o.stroke_width);
      }
    }
    pen += kAdvance + o.spacing;
  }
  return img;
}

}  // namespace htr
