#include "glass/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "glass/model.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace glass {

namespace {

// 5 rows x 3 cols per glyph, row-major, '1' = ink
const char* kGlyphRows[16] = {
    "111101101101111",  // 0
    "010110010010111",  // 1
    "111001111100111",  // 2
    "111001111001111",  // 3
    "101101111001001",  // 4
    "111100111001111",  // 5
    "111100111101111",  // 6
    "111001010010010",  // 7
    "111101111101111",  // 8
    "111101111001111",  // 9
    "010101111101101",  // A
    "110101110101110",  // B
    "111100100100111",  // C
    "110101101101110",  // D
    "111100110100111",  // E
    "111100110100100",  // F
};

}  // namespace

bool glyph_pixel(int glyph, int row, int col) {
  if (glyph < 0 || glyph >= 16 || row < 0 || row >= 5 || col < 0 || col >= 3)
    throw std::out_of_range("glyph_pixel: index out of range");
  return kGlyphRows[glyph][row * 3 + col] == '1';
}

double word_cell_size(double glyph_height) { return glyph_height / 5.0; }

double word_ink_width(double glyph_height, int n_glyphs) {
  return word_cell_size(glyph_height) * (4.0 * n_glyphs - 1.0);
}

RotatedBox word_box(double cx, double cy, double glyph_height, int n_glyphs,
                    double theta) {
  double cs = word_cell_size(glyph_height);
  RotatedBox b;
  b.cx = cx;
  b.cy = cy;
  b.w = word_ink_width(glyph_height, n_glyphs) + cs;
  b.h = glyph_height + cs;
  b.theta = canonicalize_angle(theta);
  return b;
}

void SceneSpec::validate() const {
  if (width < 16 || height < 16)
    throw std::invalid_argument("scene spec: image size too small");
  if (min_words < 0 || max_words < min_words)
    throw std::invalid_argument("scene spec: bad word count range");
  if (min_len < 1 || max_len < min_len)
    throw std::invalid_argument("scene spec: bad word length range");
  if (min_glyph_height <= 0 || max_glyph_height < min_glyph_height)
    throw std::invalid_argument("scene spec: bad glyph height range");
  if (!(min_angle <= max_angle) || !std::isfinite(min_angle) ||
      !std::isfinite(max_angle))
    throw std::invalid_argument("scene spec: bad angle range");
}

namespace {

void paint_background(Tensor& img, int w, int h, Rng& rng) {
  double base[3];
  for (int c = 0; c < 3; ++c) base[c] = 0.45 + rng.uniform(-0.1, 0.1);
  struct Wave {
    double amp, fx, fy, phase;
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 3; ++i)
    waves.push_back({rng.uniform(0.02, 0.06), rng.uniform(0.005, 0.04),
                     rng.uniform(0.005, 0.04), rng.uniform(0, 2 * M_PI)});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = 0;
      for (const auto& wv : waves)
        v += wv.amp * std::sin(2 * M_PI * (wv.fx * x + wv.fy * y) + wv.phase);
      for (int c = 0; c < 3; ++c)
        img.data()[(c * h + y) * w + x] = base[c] + v;
    }
  int nrect = rng.uniform_int(2, 6);
  for (int r = 0; r < nrect; ++r) {
    int rw = rng.uniform_int(8, std::max(9, w / 3));
    int rh = rng.uniform_int(8, std::max(9, h / 3));
    int x0 = rng.uniform_int(0, std::max(1, w - rw));
    int y0 = rng.uniform_int(0, std::max(1, h - rh));
    double delta = rng.uniform(-0.12, 0.12);
    for (int y = y0; y < std::min(h, y0 + rh); ++y)
      for (int x = x0; x < std::min(w, x0 + rw); ++x)
        for (int c = 0; c < 3; ++c) img.data()[(c * h + y) * w + x] += delta;
  }
  for (double& v : img.data()) v = std::clamp(v, 0.0, 1.0);
}

// ink coverage of one subsample point in word-local coordinates
bool ink_at(double lx, double ly, double cs, int n, const std::string& word) {
  double ink_w = cs * (4.0 * n - 1.0);
  double u = lx + ink_w / 2.0;
  double v = ly + 2.5 * cs;
  if (u < 0 || u >= ink_w || v < 0 || v >= 5 * cs) return false;
  int gi = static_cast<int>(u / (4 * cs));
  if (gi >= n) return false;
  double gx = u - gi * 4 * cs;
  if (gx >= 3 * cs) return false;
  int col = static_cast<int>(gx / cs);
  int row = static_cast<int>(v / cs);
  const char* p = std::strchr(kGlyphChars, word[gi]);
  int glyph = static_cast<int>(p - kGlyphChars);
  return glyph_pixel(glyph, std::min(row, 4), std::min(col, 2));
}

void paint_word(Tensor& img, int w, int h, const WordInstance& inst, double gh,
                double ink_color) {
  double cs = word_cell_size(gh);
  int n = static_cast<int>(inst.transcript.size());
  auto [ct, st] = cos_sin_exact(inst.box.theta);
  double rad = 0.5 * std::hypot(inst.box.w, inst.box.h) + 1.0;
  int x0 = std::max(0, (int)std::floor(inst.box.cx - rad));
  int x1 = std::min(w - 1, (int)std::ceil(inst.box.cx + rad));
  int y0 = std::max(0, (int)std::floor(inst.box.cy - rad));
  int y1 = std::min(h - 1, (int)std::ceil(inst.box.cy + rad));
  const double sub[2] = {-0.25, 0.25};
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      int hits = 0;
      for (double oy : sub)
        for (double ox : sub) {
          double dx = x + 0.5 + ox - inst.box.cx;
          double dy = y + 0.5 + oy - inst.box.cy;
          double lx = ct * dx + st * dy;
          double ly = -st * dx + ct * dy;
          if (ink_at(lx, ly, cs, n, inst.transcript)) ++hits;
        }
      if (!hits) continue;
      double cov = hits / 4.0;
      for (int c = 0; c < 3; ++c) {
        double& px = img.data()[(c * h + y) * w + x];
        px = (1 - cov) * px + cov * ink_color;
      }
    }
}

bool box_inside_image(const RotatedBox& b, int w, int h) {
  for (const Point& p : box_to_polygon(b))
    if (p.x < 1 || p.x > w - 1 || p.y < 1 || p.y > h - 1) return false;
  return true;
}

}  // namespace

Scene render_scene(const SceneSpec& spec, uint64_t seed,
                   const std::string& id) {
  spec.validate();
  Rng rng(seed);
  Scene scene;
  scene.id = id;
  scene.image = Tensor::zeros({3, spec.height, spec.width});
  paint_background(scene.image, spec.width, spec.height, rng);

  int target = rng.uniform_int(spec.min_words, spec.max_words);
  for (int wi = 0; wi < target; ++wi) {
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      int len = rng.uniform_int(spec.min_len, spec.max_len);
      std::string word;
      for (int i = 0; i < len; ++i) word.push_back(kGlyphChars[rng.uniform_int(0, 15)]);
      double gh = rng.log_uniform(spec.min_glyph_height, spec.max_glyph_height);
      double theta = rng.uniform(spec.min_angle, spec.max_angle);
      double cx = rng.uniform(0, spec.width);
      double cy = rng.uniform(0, spec.height);
      RotatedBox box = word_box(cx, cy, gh, len, theta);
      if (!box_inside_image(box, spec.width, spec.height)) continue;
      bool clash = false;
      for (const auto& other : scene.words)
        if (rotated_iou(box, other.box) >= 0.05) clash = true;
      if (clash) continue;

      WordInstance inst;
      inst.box = box;
      inst.transcript = word;
      RotatedBox ink{cx, cy, word_ink_width(gh, len), gh, box.theta};
      inst.polygon = box_to_polygon(ink);
      double ink_color =
          rng.uniform() < 0.5 ? rng.uniform(0.02, 0.15) : rng.uniform(0.85, 0.98);
      paint_word(scene.image, spec.width, spec.height, inst, gh, ink_color);
      scene.words.push_back(std::move(inst));
      placed = true;
    }
    if (!placed)
      std::cerr << "render_scene " << id << ": placement failed, emitting "
                << scene.words.size() << " of " << target << " words\n";
  }
  return scene;
}

Dataset generate_dataset(const SceneSpec& spec, int n_scenes, uint64_t seed) {
  spec.validate();
  if (n_scenes < 0) throw std::invalid_argument("generate_dataset: n < 0");
  Dataset out(n_scenes);
  for (int i = 0; i < n_scenes; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "%06d", i);
    out[i] = render_scene(spec, seed ^ (0x9e3779b97f4a7c15ull * (uint64_t)(i + 1)), id);
  }
  return out;
}

namespace {

// content rotation by exactly k quarter turns; lossless pixel permutation
Tensor quarter_turn_image(const Tensor& img, int k) {
  k = ((k % 4) + 4) % 4;
  Tensor cur = img;
  for (int t = 0; t < k; ++t) {
    int h = cur.shape()[1], w = cur.shape()[2];
    Tensor next = Tensor::zeros({3, w, h});
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < w; ++i)
        for (int j = 0; j < h; ++j)
          next.data()[(c * w + i) * h + j] = cur.at({c, h - 1 - j, i});
    cur = next;
  }
  return cur;
}

}  // namespace

Scene rotate_scene(const Scene& scene, double angle) {
  if (!std::isfinite(angle))
    throw std::invalid_argument("rotate_scene: non-finite angle");
  int h = scene.image.shape()[1], w = scene.image.shape()[2];
  auto [c, s] = cos_sin_exact(angle);

  Scene out;
  out.id = scene.id;

  double q = angle / (M_PI / 2);
  bool exact_quarter = std::fabs(q - std::round(q)) < 1e-12;
  int w2, h2;
  if (exact_quarter) {
    int k = ((int)std::llround(q) % 4 + 4) % 4;
    out.image = quarter_turn_image(scene.image, k);
    h2 = out.image.shape()[1];
    w2 = out.image.shape()[2];
  } else {
    w2 = (int)std::ceil(w * std::fabs(c) + h * std::fabs(s) - 1e-9);
    h2 = (int)std::ceil(w * std::fabs(s) + h * std::fabs(c) - 1e-9);
    out.image = Tensor::zeros({3, h2, w2});
    // out-of-source corners take the mean source color, not black: a fill
    // far from the background level distorts downstream feature statistics
    double mean_c[3] = {0, 0, 0};
    for (int ch = 0; ch < 3; ++ch) {
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) mean_c[ch] += scene.image.at({ch, y, x});
      mean_c[ch] /= (double)w * h;
    }
    for (int y2 = 0; y2 < h2; ++y2)
      for (int x2 = 0; x2 < w2; ++x2) {
        // inverse-rotate the output pixel center into source coordinates
        double dx2 = x2 + 0.5 - w2 / 2.0;
        double dy2 = y2 + 0.5 - h2 / 2.0;
        double sx = c * dx2 + s * dy2 + w / 2.0 - 0.5;
        double sy = -s * dx2 + c * dy2 + h / 2.0 - 0.5;
        int xa = (int)std::floor(sx), ya = (int)std::floor(sy);
        double fx = sx - xa, fy = sy - ya;
        for (int ch = 0; ch < 3; ++ch) {
          double acc = 0, wsum = 0;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              int xx = xa + dx, yy = ya + dy;
              if (xx < 0 || xx >= w || yy < 0 || yy >= h) continue;
              double wt = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy);
              acc += wt * scene.image.at({ch, yy, xx});
              wsum += wt;
            }
          out.image.data()[(ch * h2 + y2) * w2 + x2] =
              acc + (1.0 - wsum) * mean_c[ch];
        }
      }
  }

  auto map_point = [&](Point p) -> Point {
    double dx = p.x - w / 2.0, dy = p.y - h / 2.0;
    return {c * dx - s * dy + w2 / 2.0, s * dx + c * dy + h2 / 2.0};
  };
  for (const auto& inst : scene.words) {
    WordInstance r = inst;
    Point nc = map_point({inst.box.cx, inst.box.cy});
    r.box.cx = nc.x;
    r.box.cy = nc.y;
    r.box.theta = canonicalize_angle(inst.box.theta + angle);
    r.polygon.clear();
    for (const Point& p : inst.polygon) r.polygon.push_back(map_point(p));
    out.words.push_back(std::move(r));
  }
  return out;
}

Dataset rotate_dataset(const Dataset& data, double angle) {
  Dataset out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(rotate_scene(s, angle));
  return out;
}

void write_ppm(const Tensor& image, const std::string& path) {
  const Shape& sh = image.shape();
  if (sh.size() != 3 || sh[0] != 3)
    throw std::invalid_argument("write_ppm: image must be (3,H,W)");
  int h = sh[1], w = sh[2];
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_ppm: cannot open " + path);
  f << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(3 * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < 3; ++ch) {
        double v = std::clamp(image.at({ch, y, x}), 0.0, 1.0);
        row[x * 3 + ch] = (unsigned char)std::lround(v * 255.0);
      }
    f.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
}

Tensor read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_ppm: cannot open " + path);
  auto next_token = [&]() -> std::string {
    std::string t;
    int ch;
    while ((ch = f.get()) != EOF) {
      if (ch == '#') {
        while ((ch = f.get()) != EOF && ch != '\n') {}
        continue;
      }
      if (std::isspace(ch)) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back((char)ch);
    }
    return t;
  };
  if (next_token() != "P6") throw std::runtime_error("read_ppm: not P6: " + path);
  int w = std::stoi(next_token());
  int h = std::stoi(next_token());
  int maxv = std::stoi(next_token());
  if (w <= 0 || h <= 0 || maxv != 255)
    throw std::runtime_error("read_ppm: bad header: " + path);
  std::vector<unsigned char> buf((size_t)3 * w * h);
  f.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (f.gcount() != (std::streamsize)buf.size())
    throw std::runtime_error("read_ppm: truncated data: " + path);
  Tensor img = Tensor::zeros({3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < 3; ++ch)
        img.data()[((int64_t)ch * h + y) * w + x] =
            buf[((size_t)y * w + x) * 3 + ch] / 255.0;
  return img;
}

void write_dataset(const Dataset& data, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "images");
  std::ofstream ann(fs::path(dir) / "annotations.jsonl");
  if (!ann) throw std::runtime_error("write_dataset: cannot open " + dir);
  for (const auto& scene : data) {
    write_ppm(scene.image,
              (fs::path(dir) / "images" / (scene.id + ".ppm")).string());
    json words = json::array();
    for (const auto& wi : scene.words) {
      json poly = json::array();
      for (const Point& p : wi.polygon) poly.push_back({p.x, p.y});
      words.push_back({{"box",
                        {wi.box.cx, wi.box.cy, wi.box.w, wi.box.h, wi.box.theta}},
                       {"transcript", wi.transcript},
                       {"polygon", poly}});
    }
    ann << json{{"image_id", scene.id}, {"words", words}}.dump() << "\n";
  }
}

Dataset read_dataset(const std::string& dir) {
  std::ifstream ann(fs::path(dir) / "annotations.jsonl");
  if (!ann)
    throw std::runtime_error("read_dataset: missing annotations.jsonl in " + dir);
  Dataset out;
  std::string line;
  int lineno = 0;
  while (std::getline(ann, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("annotations.jsonl line " +
                               std::to_string(lineno) + ": " + e.what());
    }
    Scene scene;
    try {
      scene.id = rec.at("image_id").get<std::string>();
      for (const auto& wj : rec.at("words")) {
        WordInstance wi;
        const auto& b = wj.at("box");
        wi.box = {b.at(0), b.at(1), b.at(2), b.at(3), b.at(4)};
        if (!std::isfinite(wi.box.theta) || std::fabs(wi.box.theta) > M_PI / 2 + 1e-9)
          throw std::out_of_range("theta out of canonical range [-pi/2, pi/2]");
        wi.transcript = wj.at("transcript").get<std::string>();
        if (wi.transcript.empty())
          throw std::out_of_range("empty transcript");
        for (const auto& pj : wj.at("polygon"))
          wi.polygon.push_back({pj.at(0), pj.at(1)});
        scene.words.push_back(std::move(wi));
      }
    } catch (const std::out_of_range&) {
      throw;
    } catch (const std::exception& e) {
      throw std::runtime_error("annotations.jsonl line " +
                               std::to_string(lineno) + ": " + e.what());
    }
    fs::path img = fs::path(dir) / "images" / (scene.id + ".ppm");
    if (!fs::exists(img))
      throw std::runtime_error("read_dataset: missing image " + img.string());
    scene.image = read_ppm(img.string());
    out.push_back(std::move(scene));
  }
  return out;
}

}  // namespace glass
