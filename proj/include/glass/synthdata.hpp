#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "glass/geometry.hpp"
#include "glass/rng.hpp"
#include "glass/tensor.hpp"

namespace glass {

struct WordInstance {
  RotatedBox box;       // encloses the ink polygon with a small margin
  std::string transcript;
  Polygon polygon;      // tight ink rectangle, 4 vertices
};

struct SceneSpec {
  int width = 128;
  int height = 128;
  int min_words = 1;
  int max_words = 3;
  int min_len = 1;
  int max_len = 5;
  double min_glyph_height = 6.0;
  double max_glyph_height = 24.0;
  double min_angle = -M_PI / 2;
  double max_angle = M_PI / 2;

  void validate() const;
};

struct Scene {
  std::string id;
  Tensor image;  // (3,H,W) in [0,1]
  std::vector<WordInstance> words;
};

using Dataset = std::vector<Scene>;

// 5x3 binary glyph templates for "0123456789ABCDEF"
bool glyph_pixel(int glyph, int row, int col);

// Layout arithmetic, shared with the tests:
//   cell = glyph_height / 5, glyph width = 3 cells, spacing = 1 cell,
//   ink width = cell * (4n - 1), box adds one cell of margin total.
double word_cell_size(double glyph_height);
double word_ink_width(double glyph_height, int n_glyphs);
RotatedBox word_box(double cx, double cy, double glyph_height, int n_glyphs,
                    double theta);

Scene render_scene(const SceneSpec& spec, uint64_t seed,
                   const std::string& id = "scene");
Dataset generate_dataset(const SceneSpec& spec, int n_scenes, uint64_t seed);

Scene rotate_scene(const Scene& scene, double angle);
Dataset rotate_dataset(const Dataset& data, double angle);

void write_ppm(const Tensor& image, const std::string& path);
Tensor read_ppm(const std::string& path);

void write_dataset(const Dataset& data, const std::string& dir);
Dataset read_dataset(const std::string& dir);

}  // namespace glass
