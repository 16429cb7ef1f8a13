#include "doctest.h"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "bento/dataset.hpp"
#include "bento/image_io.hpp"

using namespace bento;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / "bento_dataset_test" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::vector<std::string> category_multiset(const Scene& s) {
  std::vector<std::string> names;
  for (const auto& it : s.items) names.push_back(category_name(it.category));
  std::sort(names.begin(), names.end());
  return names;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream f(p);
  REQUIRE(f.good());
  nlohmann::json j;
  f >> j;
  return j;
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream f(p, std::ios::trunc);
  f << j.dump(2);
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("tokenizer lowercases, strips punctuation and maps unknowns") {
  auto ids = data::tokenize("Place fried chicken on rice");
  REQUIRE(ids.size() == 5);
  for (int id : ids) CHECK(id != data::kUnkId);
  CHECK(ids == std::vector<int>{data::token_id("place"), data::token_id("fried"),
                                data::token_id("chicken"), data::token_id("on"),
                                data::token_id("rice")});

  CHECK(data::tokenize("Salt-grilled SALMON!") ==
        std::vector<int>{data::token_id("saltgrilled"), data::token_id("salmon")});
  CHECK(data::tokenize("quantum broccoli") ==
        std::vector<int>{data::kUnkId, data::kUnkId});
  CHECK(data::tokenize("").empty());
  CHECK(data::tokenize(" ,.!? ").empty());
}

TEST_CASE("vocabulary is fixed and collision free") {
  const auto& v = data::vocab();
  CHECK(int(v.size()) == data::vocab_size());
  CHECK(std::set<std::string>(v.begin(), v.end()).size() == v.size());
  CHECK(v[size_t(data::kPadId)] == "[PAD]");
  CHECK(v[size_t(data::kBosId)] == "[BOS]");
  CHECK(v[size_t(data::kEosId)] == "[EOS]");
  CHECK(v[size_t(data::kUnkId)] == "[UNK]");
  CHECK(data::token_id("nonsenseword") == data::kUnkId);
}

TEST_CASE("caption class follows the category words") {
  for (int t = 1; t <= 3; ++t)
    CHECK(data::caption_class(data::tokenize(data::base_caption(t))) == t);
  CHECK(data::caption_class(data::tokenize("put it on the plate")) == 0);
  CHECK_THROWS_AS(data::base_caption(4), ValueError);
}

TEST_CASE("caption expansion yields distinct faithful paraphrases") {
  for (int t = 1; t <= 3; ++t) {
    const std::string base = data::base_caption(t);
    auto pool = data::expand_captions(base, 25, 99);
    REQUIRE(pool.size() == 25);
    std::set<std::string> uniq(pool.begin(), pool.end());
    CHECK(uniq.size() == 25);
    CHECK(uniq.count(base) == 0);
    for (const auto& cap : pool) {
      auto toks = data::tokenize(cap);
      CHECK(data::caption_class(toks) == t);
      CHECK(int(toks.size()) <= 12);
      for (int id : toks) CHECK(id != data::kUnkId);
    }
    CHECK(data::expand_captions(base, 25, 99) == pool);
    CHECK(data::expand_captions(base, 25, 100) != pool);
  }

  // Grammar capacity is fixed; asking beyond it must fail loudly.
  CHECK(data::expand_captions(data::base_caption(1), 59, 1).size() == 59);
  CHECK_THROWS_AS(data::expand_captions(data::base_caption(1), 60, 1), ValueError);
  CHECK(data::expand_captions(data::base_caption(3), 239, 1).size() == 239);
  CHECK_THROWS_AS(data::expand_captions(data::base_caption(3), 240, 1), ValueError);
  CHECK_THROWS_AS(data::expand_captions("mystery stew on noodles", 5, 1), ValueError);
}

TEST_CASE("caption selection draws without replacement") {
  auto pool = data::expand_captions(data::base_caption(2), 25, 7);
  auto picked = data::select_captions(pool, 8, 42);
  REQUIRE(picked.size() == 8);
  std::set<std::string> uniq(picked.begin(), picked.end());
  CHECK(uniq.size() == 8);
  for (const auto& s : picked)
    CHECK(std::find(pool.begin(), pool.end(), s) != pool.end());
  CHECK(data::select_captions(pool, 8, 42) == picked);
  CHECK(data::select_captions(pool, 0, 1).empty());
  CHECK_THROWS_AS(data::select_captions(pool, 26, 1), ValueError);
}

TEST_CASE("generated scenes satisfy every annotation invariant") {
  const std::vector<std::vector<std::string>> want = {
      {"fried_chicken", "rice"},
      {"rice", "salmon", "tamagoyaki"},
      {"croquette", "fried_shrimp", "rice"},
  };
  for (int type = 1; type <= 3; ++type)
    for (uint64_t seed = 0; seed < 12; ++seed) {
      Scene s = data::generate_synthetic_scene(type, seed * 31 + uint64_t(type));
      CHECK(s.type == type);
      CHECK(s.canvas_h == 64);
      CHECK(s.canvas_w == 64);
      CHECK(category_multiset(s) == want[size_t(type) - 1]);
      CHECK(s.captions.size() == 9);
      std::set<std::string> caps(s.captions.begin(), s.captions.end());
      CHECK(caps.size() == 9);
      CHECK(s.captions[0] == data::base_caption(type));
      for (const auto& c : s.captions)
        CHECK(data::caption_class(data::tokenize(c)) == type);

      for (const auto& it : s.items) {
        CHECK(it.bbox.valid());
        CHECK(it.amodal.area() > 0);
        CHECK(it.visible.area() > 0);
        CHECK(it.visible.subset_of(it.amodal));
        CHECK(it.amodal.h == 64);
        CHECK(it.cutout.shape() == Shape{4, 64, 64});
        // The amodal mask is exactly the placed cut-out's solid alpha.
        CHECK(it.amodal == data::alpha_to_mask(data::placed_item(it, 64, 64)));
      }
      // Items on top keep their whole footprint visible.
      CHECK(s.items.back().visible == s.items.back().amodal);
      // Required occlusions for the type.
      for (size_t k = 1; k < s.items.size(); ++k) {
        int64_t overlap = 0;
        for (size_t p = 0; p < s.items[0].amodal.v.size(); ++p)
          if (s.items[0].amodal.v[p] && s.items[k].amodal.v[p]) ++overlap;
        CHECK(overlap >= 16);
      }
    }
}

TEST_CASE("scene generation is reproducible and seed sensitive") {
  Scene a = data::generate_synthetic_scene(3, 555);
  Scene b = data::generate_synthetic_scene(3, 555);
  CHECK(a.scene_id == b.scene_id);
  CHECK(a.captions == b.captions);
  CHECK(a.background.data() == b.background.data());
  REQUIRE(a.items.size() == b.items.size());
  for (size_t k = 0; k < a.items.size(); ++k) {
    CHECK(a.items[k].bbox.cx == b.items[k].bbox.cx);
    CHECK(a.items[k].cutout.data() == b.items[k].cutout.data());
    CHECK(a.items[k].visible == b.items[k].visible);
    CHECK(a.items[k].amodal == b.items[k].amodal);
  }

  Scene c = data::generate_synthetic_scene(3, 556);
  CHECK(a.items[0].bbox.cx != c.items[0].bbox.cx);
}

TEST_CASE("rendering composites items bottom to top") {
  // Full-canvas boxes sample at exact pixel centers, so alpha-over is exact.
  const int hw = 8;
  auto make = [&](int id, int z, double r, double g, double b, int top, int bottom) {
    FoodItem it;
    it.id = id;
    it.z = z;
    it.bbox = {0.5, 0.5, 1.0, 1.0};
    it.cutout = Tensor::zeros({4, hw, hw});
    for (int i = top; i < bottom; ++i)
      for (int j = 0; j < hw; ++j) {
        it.cutout.at(0, i, j) = r;
        it.cutout.at(1, i, j) = g;
        it.cutout.at(2, i, j) = b;
        it.cutout.at(3, i, j) = 1.0;
      }
    return it;
  };
  Scene s;
  s.canvas_h = s.canvas_w = hw;
  s.background = Tensor::full({3, hw, hw}, 0.2);
  s.items.push_back(make(0, 1, 0.9, 0.1, 0.1, 2, 6));  // listed first, placed second
  s.items.push_back(make(1, 0, 0.1, 0.8, 0.3, 4, 8));

  Tensor img = data::render_scene(s);
  REQUIRE(img.shape() == Shape{3, hw, hw});
  auto expect = [&](int i, std::array<double, 3> rgb) {
    for (int j = 0; j < hw; ++j)
      for (int c = 0; c < 3; ++c) CHECK(img.at(c, i, j) == rgb[size_t(c)]);
  };
  expect(0, {0.2, 0.2, 0.2});  // background only
  expect(3, {0.9, 0.1, 0.1});  // item 0 alone
  expect(5, {0.9, 0.1, 0.1});  // item 0 over item 1: z wins, not list order
  expect(7, {0.1, 0.8, 0.3});  // item 1 alone

  Tensor gen = data::render_scene(data::generate_synthetic_scene(1, 12));
  REQUIRE(gen.shape() == Shape{3, 64, 64});
  for (double v : gen.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("annotations round trip through disk") {
  auto dir = fresh_dir("roundtrip");
  Scene s = data::generate_synthetic_scene(2, 77);
  const std::string jpath = data::write_annotation(s, dir.string());
  Scene back = data::load_annotation(jpath);

  CHECK(back.scene_id == s.scene_id);
  CHECK(back.type == s.type);
  CHECK(back.canvas_h == s.canvas_h);
  CHECK(back.captions == s.captions);
  REQUIRE(back.items.size() == s.items.size());
  for (size_t k = 0; k < s.items.size(); ++k) {
    const auto& orig = s.items[k];
    const auto& got = back.items[k];
    CHECK(got.id == orig.id);
    CHECK(got.category == orig.category);
    CHECK(got.z == orig.z);
    CHECK(got.bbox.cx == orig.bbox.cx);
    CHECK(got.bbox.cy == orig.bbox.cy);
    CHECK(got.bbox.w == orig.bbox.w);
    CHECK(got.bbox.h == orig.bbox.h);
    CHECK(got.visible == orig.visible);
    CHECK(got.amodal == orig.amodal);
    REQUIRE(got.cutout.shape() == orig.cutout.shape());
    for (size_t p = 0; p < got.cutout.data().size(); ++p)
      CHECK(std::fabs(got.cutout.data()[p] - orig.cutout.data()[p]) <=
            0.5 / 255.0 + 1e-12);
  }
}

TEST_CASE("annotation files are byte identical across runs") {
  auto d1 = fresh_dir("bytes1");
  auto d2 = fresh_dir("bytes2");
  Scene s = data::generate_synthetic_scene(1, 4242);
  data::write_annotation(s, d1.string());
  data::write_annotation(s, d2.string());
  int compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(d1)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), d1);
    std::ifstream f1(entry.path(), std::ios::binary);
    std::ifstream f2(d2 / rel, std::ios::binary);
    REQUIRE(f2.good());
    std::vector<char> b1((std::istreambuf_iterator<char>(f1)),
                         std::istreambuf_iterator<char>());
    std::vector<char> b2((std::istreambuf_iterator<char>(f2)),
                         std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    ++compared;
  }
  CHECK(compared == 8);  // json + background + 2 items x 3 pngs
}

TEST_CASE("loader rejects inconsistent annotations") {
  auto dir = fresh_dir("reject");
  Scene s = data::generate_synthetic_scene(1, 9);
  const std::string jpath = data::write_annotation(s, dir.string());

  SUBCASE("visible mask escaping the amodal mask") {
    Mask all(64, 64);
    for (auto& p : all.v) p = 1;
    io::write_png((dir / s.scene_id / "item0_visible.png").string(),
                  io::mask_to_image(all));
    CHECK_THROWS_WITH_AS(data::load_annotation(jpath), doctest::Contains("item 0"),
                         DataError);
  }
  SUBCASE("empty caption list") {
    auto j = read_json(jpath);
    j["captions"] = nlohmann::json::array();
    write_json(jpath, j);
    CHECK_THROWS_WITH_AS(data::load_annotation(jpath), doctest::Contains("caption"),
                         DataError);
  }
  SUBCASE("missing bbox key") {
    auto j = read_json(jpath);
    j["items"][0].erase("bbox");
    write_json(jpath, j);
    CHECK_THROWS_AS(data::load_annotation(jpath), DataError);
  }
  SUBCASE("degenerate bbox") {
    auto j = read_json(jpath);
    j["items"][0]["bbox"] = {0.5, 0.5, 0.0, 0.4};
    write_json(jpath, j);
    CHECK_THROWS_WITH_AS(data::load_annotation(jpath), doctest::Contains("bbox"),
                         DataError);
  }
  SUBCASE("categories not matching the presentation type") {
    auto j = read_json(jpath);
    j["items"][1]["category"] = "salmon";
    write_json(jpath, j);
    CHECK_THROWS_AS(data::load_annotation(jpath), DataError);
  }
  SUBCASE("bad type") {
    auto j = read_json(jpath);
    j["type"] = 7;
    write_json(jpath, j);
    CHECK_THROWS_AS(data::load_annotation(jpath), DataError);
  }
  SUBCASE("duplicate z") {
    auto j = read_json(jpath);
    j["items"][1]["z"] = j["items"][0]["z"];
    write_json(jpath, j);
    CHECK_THROWS_AS(data::load_annotation(jpath), DataError);
  }
  SUBCASE("unreadable json") {
    CHECK_THROWS_AS(data::load_annotation((dir / "nope.json").string()), IoError);
  }
  SUBCASE("malformed json body") {
    std::ofstream f(jpath, std::ios::trunc);
    f << "{ definitely not json";
    f.close();
    CHECK_THROWS_AS(data::load_annotation(jpath), DataError);
  }
}

TEST_CASE("truth order lists ids by ascending z") {
  Scene s = data::generate_synthetic_scene(3, 21);
  auto order = data::truth_order(s);
  REQUIRE(order.ids.size() == 3);
  std::vector<int> zs;
  for (int id : order.ids)
    for (const auto& it : s.items)
      if (it.id == id) zs.push_back(it.z);
  CHECK(std::is_sorted(zs.begin(), zs.end()));
}

}
