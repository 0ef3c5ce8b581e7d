#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "glass/synthdata.hpp"

using namespace glass;
namespace fs = std::filesystem;

static SceneSpec default_spec() {
  SceneSpec s;
  s.width = 96;
  s.height = 96;
  s.min_words = 1;
  s.max_words = 3;
  s.min_glyph_height = 8;
  s.max_glyph_height = 20;
  return s;
}

TEST_CASE("spec validation") {
  SceneSpec s = default_spec();
  CHECK_NOTHROW(s.validate());
  SceneSpec bad = s;
  bad.min_glyph_height = 30;  // inverted scale range
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = s;
  bad.max_words = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = s;
  bad.min_angle = 1.0;
  bad.max_angle = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("determinism: same seed gives identical scenes") {
  SceneSpec s = default_spec();
  Scene a = render_scene(s, 42, "a");
  Scene b = render_scene(s, 42, "a");
  CHECK(a.image.data() == b.image.data());
  REQUIRE(a.words.size() == b.words.size());
  for (size_t i = 0; i < a.words.size(); ++i) {
    CHECK(a.words[i].transcript == b.words[i].transcript);
    CHECK(a.words[i].box.cx == b.words[i].box.cx);
    CHECK(a.words[i].box.theta == b.words[i].box.theta);
  }
  Scene c = render_scene(s, 43, "a");
  CHECK(a.image.data() != c.image.data());
}

TEST_CASE("layout arithmetic oracle") {
  // glyph height 16: cell 3.2, glyph width 9.6, spacing 3.2
  CHECK(word_cell_size(16) == doctest::Approx(3.2));
  CHECK(word_ink_width(16, 1) == doctest::Approx(9.6));
  CHECK(word_ink_width(16, 3) == doctest::Approx(3.2 * 11));
  RotatedBox b = word_box(50, 40, 16, 1, 0);
  CHECK(b.w == doctest::Approx(12.8));
  CHECK(b.h == doctest::Approx(19.2));
  CHECK(b.cx == 50.0);
  CHECK(b.theta == 0.0);
}

TEST_CASE("box encloses polygon, words do not overlap") {
  SceneSpec s = default_spec();
  s.max_words = 4;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Scene sc = render_scene(s, seed, "t");
    for (const auto& w : sc.words) {
      CHECK(!w.transcript.empty());
      CHECK(polygon_area(w.polygon) > 0);
      // the gt polygon clipped by the box keeps its full area
      Polygon boxp = box_to_polygon(w.box);
      CHECK(polygon_intersection_area(w.polygon, boxp) ==
            doctest::Approx(polygon_area(w.polygon)).epsilon(1e-9));
    }
    for (size_t i = 0; i < sc.words.size(); ++i)
      for (size_t j = i + 1; j < sc.words.size(); ++j)
        CHECK(rotated_iou(sc.words[i].box, sc.words[j].box) < 0.05);
  }
}

TEST_CASE("zero-word spec gives empty annotations and a valid image") {
  SceneSpec s = default_spec();
  s.min_words = s.max_words = 0;
  Scene sc = render_scene(s, 7, "empty");
  CHECK(sc.words.empty());
  CHECK(sc.image.shape() == Shape{3, 96, 96});
  for (double v : sc.image.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("rendered ink lands inside the annotated polygon") {
  SceneSpec s = default_spec();
  s.min_words = s.max_words = 1;
  s.min_angle = s.max_angle = 0.0;
  s.min_glyph_height = s.max_glyph_height = 15;
  SceneSpec bg_only = s;
  bg_only.min_words = bg_only.max_words = 0;
  int checked = 0;
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    Scene sc = render_scene(s, seed, "w");
    if (sc.words.empty()) continue;
    // same seed with zero words replays the identical background
    Scene bg = render_scene(bg_only, seed, "w");
    double xmin = 1e9, xmax = -1e9, ymin = 1e9, ymax = -1e9;
    for (int y = 0; y < 96; ++y)
      for (int x = 0; x < 96; ++x) {
        double d = 0;
        for (int c = 0; c < 3; ++c)
          d += std::fabs(sc.image.at({c, y, x}) - bg.image.at({c, y, x}));
        if (d > 0.05) {
          xmin = std::min(xmin, (double)x);
          xmax = std::max(xmax, (double)x + 1);
          ymin = std::min(ymin, (double)y);
          ymax = std::max(ymax, (double)y + 1);
        }
      }
    REQUIRE(xmax > xmin);  // the word left visible ink
    double pxmin = 1e9, pxmax = -1e9, pymin = 1e9, pymax = -1e9;
    for (const Point& p : sc.words[0].polygon) {
      pxmin = std::min(pxmin, p.x);
      pxmax = std::max(pxmax, p.x);
      pymin = std::min(pymin, p.y);
      pymax = std::max(pymax, p.y);
    }
    CHECK(std::fabs(xmin - pxmin) <= 1.5);
    CHECK(std::fabs(xmax - pxmax) <= 1.5);
    CHECK(std::fabs(ymin - pymin) <= 1.5);
    CHECK(std::fabs(ymax - pymax) <= 1.5);
    ++checked;
  }
  CHECK(checked >= 5);
}

TEST_CASE("rotate_scene identity and quarter turn") {
  SceneSpec s = default_spec();
  Scene sc = render_scene(s, 5, "r");
  Scene id = rotate_scene(sc, 0.0);
  CHECK(id.image.data() == sc.image.data());
  REQUIRE(id.words.size() == sc.words.size());
  for (size_t i = 0; i < sc.words.size(); ++i)
    CHECK(id.words[i].box.cx == sc.words[i].box.cx);

  Scene q = rotate_scene(sc, M_PI / 2);
  int h = sc.image.shape()[1], w = sc.image.shape()[2];
  CHECK(q.image.shape() == Shape{3, w, h});
  // exact pixel permutation: output (i,j) reads input (h-1-j, i)
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < w; i += 7)
      for (int j = 0; j < h; j += 5)
        CHECK(q.image.at({c, i, j}) == sc.image.at({c, h - 1 - j, i}));
  for (size_t i = 0; i < sc.words.size(); ++i) {
    CHECK(q.words[i].transcript == sc.words[i].transcript);
    CHECK(q.words[i].box.theta ==
          doctest::Approx(canonicalize_angle(sc.words[i].box.theta + M_PI / 2))
              .epsilon(1e-12));
  }
}

TEST_CASE("rotate_scene corners match the rotation-matrix oracle") {
  SceneSpec s = default_spec();
  Scene sc = render_scene(s, 6, "r30");
  double ang = M_PI / 6;
  Scene r = rotate_scene(sc, ang);
  int h = sc.image.shape()[1], w = sc.image.shape()[2];
  int h2 = r.image.shape()[1], w2 = r.image.shape()[2];
  double c = std::cos(ang), sn = std::sin(ang);
  REQUIRE(r.words.size() == sc.words.size());
  for (size_t i = 0; i < sc.words.size(); ++i) {
    REQUIRE(r.words[i].polygon.size() == sc.words[i].polygon.size());
    for (size_t v = 0; v < sc.words[i].polygon.size(); ++v) {
      Point p = sc.words[i].polygon[v];
      double dx = p.x - w / 2.0, dy = p.y - h / 2.0;
      double ex = c * dx - sn * dy + w2 / 2.0;
      double ey = sn * dx + c * dy + h2 / 2.0;
      CHECK(r.words[i].polygon[v].x == doctest::Approx(ex).epsilon(1e-9));
      CHECK(r.words[i].polygon[v].y == doctest::Approx(ey).epsilon(1e-9));
    }
    // the rotated gt box covers the same region as the transformed original
    RotatedBox manual = sc.words[i].box;
    double dx = manual.cx - w / 2.0, dy = manual.cy - h / 2.0;
    manual.cx = c * dx - sn * dy + w2 / 2.0;
    manual.cy = sn * dx + c * dy + h2 / 2.0;
    manual.theta = manual.theta + ang;
    CHECK(rotated_iou(r.words[i].box, manual) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("rotate_dataset preserves counts and transcripts") {
  SceneSpec s = default_spec();
  Dataset d = generate_dataset(s, 4, 9);
  Dataset r = rotate_dataset(d, 1.1);
  REQUIRE(r.size() == d.size());
  for (size_t i = 0; i < d.size(); ++i) {
    REQUIRE(r[i].words.size() == d[i].words.size());
    for (size_t j = 0; j < d[i].words.size(); ++j)
      CHECK(r[i].words[j].transcript == d[i].words[j].transcript);
  }
}

TEST_CASE("generate_dataset per-scene seeds are index-stable") {
  SceneSpec s = default_spec();
  Dataset small = generate_dataset(s, 3, 77);
  Dataset big = generate_dataset(s, 5, 77);
  CHECK(small[2].image.data() == big[2].image.data());
  CHECK(small[2].id == "000002");
  CHECK(small[0].image.data() != small[1].image.data());
}

TEST_CASE("ppm round trip") {
  Rng rng(50);
  Tensor img = Tensor::zeros({3, 5, 7});
  for (double& v : img.data()) v = rng.uniform();
  write_ppm(img, "/tmp/glass_t.ppm");
  Tensor back = read_ppm("/tmp/glass_t.ppm");
  REQUIRE(back.shape() == img.shape());
  for (int64_t i = 0; i < img.numel(); ++i)
    CHECK(std::fabs(back.data()[i] - img.data()[i]) <= 0.5 / 255 + 1e-9);
  // quantized values survive a second trip exactly
  write_ppm(back, "/tmp/glass_t2.ppm");
  Tensor back2 = read_ppm("/tmp/glass_t2.ppm");
  CHECK(back2.data() == back.data());
  fs::remove("/tmp/glass_t.ppm");
  fs::remove("/tmp/glass_t2.ppm");
}

TEST_CASE("dataset write read round trip") {
  SceneSpec s = default_spec();
  Dataset d = generate_dataset(s, 3, 11);
  std::string dir = "/tmp/glass_ds_rt";
  fs::remove_all(dir);
  write_dataset(d, dir);
  Dataset back = read_dataset(dir);
  REQUIRE(back.size() == d.size());
  for (size_t i = 0; i < d.size(); ++i) {
    CHECK(back[i].id == d[i].id);
    REQUIRE(back[i].words.size() == d[i].words.size());
    for (size_t j = 0; j < d[i].words.size(); ++j) {
      // annotations survive exactly
      CHECK(back[i].words[j].box.cx == d[i].words[j].box.cx);
      CHECK(back[i].words[j].box.theta == d[i].words[j].box.theta);
      CHECK(back[i].words[j].transcript == d[i].words[j].transcript);
      REQUIRE(back[i].words[j].polygon.size() == d[i].words[j].polygon.size());
      for (size_t v = 0; v < d[i].words[j].polygon.size(); ++v)
        CHECK(back[i].words[j].polygon[v].x == d[i].words[j].polygon[v].x);
    }
    for (int64_t k = 0; k < d[i].image.numel(); ++k)
      CHECK(std::fabs(back[i].image.data()[k] - d[i].image.data()[k]) <=
            0.5 / 255 + 1e-9);
  }
  // identical write is byte-identical
  std::string dir2 = "/tmp/glass_ds_rt2";
  fs::remove_all(dir2);
  write_dataset(d, dir2);
  std::ifstream f1(fs::path(dir) / "annotations.jsonl"),
      f2(fs::path(dir2) / "annotations.jsonl");
  std::string s1((std::istreambuf_iterator<char>(f1)),
                 std::istreambuf_iterator<char>()),
      s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("dataset reader rejects bad input") {
  std::string dir = "/tmp/glass_ds_bad";
  fs::remove_all(dir);
  fs::create_directories(fs::path(dir) / "images");
  {
    std::ofstream ann(fs::path(dir) / "annotations.jsonl");
    ann << "{not json\n";
  }
  CHECK_THROWS_WITH_AS(read_dataset(dir), doctest::Contains("line 1"),
                       std::runtime_error);

  // theta out of canonical range
  {
    std::ofstream ann(fs::path(dir) / "annotations.jsonl");
    ann << R"({"image_id":"x","words":[{"box":[10,10,8,4,3.5],"transcript":"7","polygon":[[1,1],[2,1],[2,2],[1,2]]}]})"
        << "\n";
  }
  CHECK_THROWS_AS(read_dataset(dir), std::out_of_range);

  // dangling image reference
  {
    std::ofstream ann(fs::path(dir) / "annotations.jsonl");
    ann << R"({"image_id":"x","words":[]})" << "\n";
  }
  CHECK_THROWS_WITH_AS(read_dataset(dir), doctest::Contains("missing image"),
                       std::runtime_error);

  // empty dataset is fine
  {
    std::ofstream ann(fs::path(dir) / "annotations.jsonl");
  }
  CHECK(read_dataset(dir).empty());
  fs::remove_all(dir);
}
