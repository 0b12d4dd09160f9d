#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include "core/error.hpp"
#include "datamodel.hpp"
#include "image_io.hpp"
#include "test_util.hpp"

using namespace mduit;
using mduit::testing::random_pose;
using mduit::testing::TempDir;

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p) << s;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST_CASE("image values must be finite and inside [-1, 1]") {
  Tensor t(Shape{3, 8, 8}, 0.5);
  CHECK_NOTHROW(Image{t});
  t[5] = 1.5;
  CHECK_THROWS_AS(Image{t}, Error);
  t[5] = NAN;
  CHECK_THROWS_AS(Image{t}, Error);
  CHECK_THROWS_AS(Image(Tensor(Shape{1, 8, 8})), Error);
  CHECK(Image::clamped(Tensor(Shape{3, 2, 2}, 4.0)).at(0, 0, 0) == 1.0);
}

TEST_CASE("image size check against the downsampling factor") {
  CHECK_NOTHROW(check_image_size(Image(16, 24), 8));
  CHECK_THROWS_AS(check_image_size(Image(12, 16), 8), Error);
}

TEST_CASE("pose_distance examples") {
  const auto a = PoseAnnotation::from_yaw(0.0, {0, 0, 0});
  SUBCASE("identity") {
    const PoseDistance d = pose_distance(a, a);
    CHECK(d.angle_deg == 0.0);
    CHECK(d.dist_m == 0.0);
  }
  SUBCASE("90 degrees about z") {
    const auto b = PoseAnnotation::from_yaw(90.0, {0, 0, 0});
    // Independent oracle: the relative rotation's w is cos(45 deg).
    const double w = std::cos(M_PI / 4);
    CHECK(pose_distance(a, b).angle_deg ==
          doctest::Approx(2.0 * std::acos(w) * 180.0 / M_PI).epsilon(1e-12));
    CHECK(pose_distance(a, b).angle_deg == doctest::Approx(90.0));
  }
  SUBCASE("3-4-5 translation") {
    const auto b = PoseAnnotation::from_yaw(0.0, {3, 4, 0});
    CHECK(pose_distance(a, b).dist_m == 5.0);
    CHECK(pose_distance(a, b).angle_deg == 0.0);
  }
  SUBCASE("q and -q are the same rotation") {
    auto b = a;
    for (double& v : b.rotation) v = -v;
    CHECK(pose_distance(a, b).angle_deg == 0.0);
  }
  SUBCASE("non-unit quaternion is rejected") {
    PoseAnnotation bad;
    bad.rotation = {1.0, 0.1, 0.0, 0.0};
    CHECK(code_of([&] { pose_distance(a, bad); }) == ErrorCode::kValidation);
    CHECK_THROWS_AS(PoseAnnotation::make({2, 0, 0, 0}, {0, 0, 0}), Error);
  }
}

TEST_CASE("pose_distance is symmetric, zero on the diagonal, in [0, 180]") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 500; ++i) {
    const auto a = random_pose(rng), b = random_pose(rng);
    const PoseDistance ab = pose_distance(a, b), ba = pose_distance(b, a);
    CHECK(ab.angle_deg == ba.angle_deg);
    CHECK(ab.dist_m == ba.dist_m);
    CHECK(ab.angle_deg >= 0.0);
    CHECK(ab.angle_deg <= 180.0);
    CHECK(pose_distance(a, a).dist_m == 0.0);
    CHECK(pose_distance(a, a).angle_deg < 1e-5);
  }
}

TEST_CASE("load_manifest") {
  TempDir dir("manifest");
  SUBCASE("three valid lines") {
    write_text(dir / "m.jsonl",
               R"({"path":"a.png","domain":"day","reference":true,"pose":{"q":[1,0,0,0],"t":[0,0,0]}}
{"path":"b.png","domain":"night","reference":false}

{"path":"c.png","domain":"day","reference":false,"pose":{"q":[0,0,0,1],"t":[1,2,3]}}
)");
    const Manifest m = load_manifest(dir / "m.jsonl");
    REQUIRE(m.records.size() == 3);
    CHECK(m.records[0].is_reference);
    CHECK(m.records[0].domain.id == 0);
    CHECK(m.records[1].domain.id == 1);
    CHECK(m.records[2].domain.id == 0);
    CHECK(m.records[2].pose->translation[2] == 3.0);
    CHECK(m.domain_names() == std::vector<std::string>{"day", "night"});
    CHECK(m.resolve(m.records[1]) == dir.path() / "b.png");
  }
  SUBCASE("reference without pose") {
    write_text(dir / "m.jsonl", R"({"path":"a.png","domain":"day","reference":true})");
    CHECK(code_of([&] { load_manifest(dir / "m.jsonl"); }) == ErrorCode::kValidation);
  }
  SUBCASE("malformed line names its line number") {
    write_text(dir / "m.jsonl",
               "{\"path\":\"a.png\",\"domain\":\"day\",\"reference\":false}\n{oops\n");
    try {
      load_manifest(dir / "m.jsonl");
      FAIL("expected parse error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kParse);
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
  }
  SUBCASE("missing key") {
    write_text(dir / "m.jsonl", R"({"path":"a.png","reference":false})");
    CHECK(code_of([&] { load_manifest(dir / "m.jsonl"); }) == ErrorCode::kParse);
  }
  SUBCASE("missing file") {
    CHECK(code_of([&] { load_manifest(dir / "none.jsonl"); }) == ErrorCode::kIo);
  }
}

TEST_CASE("manifest save/load round trip on random records") {
  std::mt19937_64 rng(22);
  TempDir dir("roundtrip");
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<DatasetRecord> records;
    std::uniform_int_distribution<int> n(1, 12), dom(0, 3), coin(0, 1);
    const char* names[] = {"day", "dusk", "snow", "night \"quoted\""};
    std::map<std::string, int> ids;
    for (int i = 0, m = n(rng); i < m; ++i) {
      DatasetRecord r;
      r.image_path = "images/x_" + std::to_string(trial) + "_" + std::to_string(i) + ".png";
      r.domain.name = names[dom(rng)];
      r.domain.id = ids.emplace(r.domain.name, static_cast<int>(ids.size())).first->second;
      r.is_reference = coin(rng) == 1;
      if (r.is_reference || coin(rng)) r.pose = random_pose(rng);
      if (coin(rng)) r.scene = i;
      records.push_back(r);
    }
    save_manifest(dir / "m.jsonl", records);
    const Manifest back = load_manifest(dir / "m.jsonl");
    REQUIRE(back.records.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& a = records[i];
      const auto& b = back.records[i];
      CHECK(a.image_path == b.image_path);
      CHECK(a.domain == b.domain);
      CHECK(a.is_reference == b.is_reference);
      CHECK(a.scene == b.scene);
      REQUIRE(a.pose.has_value() == b.pose.has_value());
      if (a.pose) {
        for (int k = 0; k < 4; ++k)
          CHECK(std::abs(a.pose->rotation[k] - b.pose->rotation[k]) <= 1e-9);
        for (int k = 0; k < 3; ++k)
          CHECK(std::abs(a.pose->translation[k] - b.pose->translation[k]) <= 1e-9);
      }
    }
  }
}

TEST_CASE("embedding must be unit norm") {
  CHECK_NOTHROW(Embedding({0.6, 0.8}));
  CHECK_THROWS_AS(Embedding({0.6, 0.7}), Error);
  CHECK(Embedding({1.0, 0.0}).dot(Embedding({0.6, 0.8})) == doctest::Approx(0.6));
}

TEST_CASE("hyperparameter defaults and validation") {
  HyperParams hp;
  CHECK(hp.margin_content == 0.1);
  CHECK(hp.temperature == 0.07);
  CHECK(hp.n_neg == 16);
  CHECK(hp.betas.rec_self == 100.0);
  CHECK(hp.betas.rec_cycle == 100.0);
  CHECK(hp.betas.cons_content == 10.0);
  CHECK(hp.betas.cons_appearance == 1.0);
  CHECK(hp.betas.nce == 1.0);
  CHECK(hp.rot_thresh_deg == 8.0);
  CHECK(hp.trans_thresh_m == 7.0);
  CHECK(hp.lr == 2e-4);
  CHECK(hp.total_epochs() == 50);
  CHECK_NOTHROW(hp.validate());
  hp.temperature = 0.0;
  CHECK(code_of([&] { hp.validate(); }) == ErrorCode::kConfig);
  hp = HyperParams{};
  hp.filter_k = 4;
  CHECK(code_of([&] { hp.validate(); }) == ErrorCode::kConfig);
}

TEST_CASE("PNG round trip is exact after 8-bit quantization") {
  std::mt19937_64 rng(23);
  TempDir dir("png");
  const Image img = mduit::testing::random_image(rng, 8, 16);
  write_png(dir / "a.png", img);
  const Image back = read_png(dir / "a.png");
  CHECK(back == quantize_u8(img));
  CHECK(to_u8(-1.0) == 0);
  CHECK(to_u8(1.0) == 255);
  CHECK(from_u8(255) == 1.0);
  CHECK(code_of([&] { read_png(dir / "missing.png"); }) == ErrorCode::kIo);
  write_text(dir / "bad.png", "not a png");
  CHECK(code_of([&] { read_png(dir / "bad.png"); }) == ErrorCode::kParse);
}
