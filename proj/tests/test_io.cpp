#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "t3sr/io.hpp"
#include "test_support.hpp"

using namespace t3sr;
using t3sr::test::random_volume;
using t3sr::test::TempDir;

namespace {

IoError::Kind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const IoError& e) {
    return e.kind();
  }
  FAIL("expected IoError");
  return IoError::Kind::read_failed;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("f64 volumes round-trip bitwise", "[io]") {
  TempDir dir("t3sr-io");
  const Volume3 x = random_volume({7, 5, 3}, 11);
  const auto path = dir.file("vol.t3r");

  VolumeWriteOptions opts;
  opts.voxel_size = {{0.5, 0.5, 1.25}};
  opts.provenance = {{"source", "synthetic"}};
  write_volume(x, path, opts);

  VolumeHeader h;
  const Volume3 back = read_volume(path, &h);
  REQUIRE(back.dims() == x.dims());
  REQUIRE(std::memcmp(back.data().data(), x.data().data(),
                      sizeof(double) * x.size()) == 0);
  REQUIRE(h.dtype == "f64");
  REQUIRE(h.voxel_size.has_value());
  REQUIRE((*h.voxel_size)[2] == 1.25);
  REQUIRE(h.provenance.at("source") == "synthetic");
}

TEST_CASE("f32 storage keeps single-precision accuracy", "[io]") {
  TempDir dir("t3sr-io");
  const Volume3 x = random_volume({6, 6, 6}, 21);
  const auto path = dir.file("vol32.t3r");

  VolumeWriteOptions opts;
  opts.dtype = "f32";
  write_volume(x, path, opts);

  VolumeHeader h;
  const Volume3 back = read_volume(path, &h);
  REQUIRE(h.dtype == "f32");
  const double bound =
      std::ldexp(x.data().cwiseAbs().maxCoeff(), -24);  // 2^-24 * maxabs
  REQUIRE((back.data() - x.data()).cwiseAbs().maxCoeff() <= bound);
}

TEST_CASE("payload shorter than the header implies is rejected", "[io]") {
  TempDir dir("t3sr-io");
  const auto path = dir.file("vol.t3r");
  write_volume(random_volume({4, 4, 4}, 31), path);
  std::filesystem::resize_file(path, 100);

  REQUIRE(kind_of([&] { read_volume(path); }) ==
          IoError::Kind::length_mismatch);
}

TEST_CASE("a volume without its sidecar is unreadable", "[io]") {
  TempDir dir("t3sr-io");
  const auto path = dir.file("vol.t3r");
  write_volume(random_volume({4, 4, 4}, 41), path);
  std::filesystem::remove(path + ".json");

  REQUIRE(kind_of([&] { read_volume(path); }) ==
          IoError::Kind::missing_sidecar);
}

TEST_CASE("sidecar problems map to distinct error kinds", "[io]") {
  TempDir dir("t3sr-io");
  const auto path = dir.file("vol.t3r");
  write_volume(random_volume({4, 4, 4}, 51), path);
  const std::string good = slurp(path + ".json");

  const auto patch_sidecar = [&](const std::string& from,
                                 const std::string& to) {
    std::string text = good;
    text.replace(text.find(from), from.size(), to);
    std::ofstream(path + ".json", std::ios::trunc) << text;
  };

  SECTION("unparseable JSON") {
    std::ofstream(path + ".json", std::ios::trunc) << "{not json";
    REQUIRE(kind_of([&] { read_volume(path); }) == IoError::Kind::bad_header);
  }
  SECTION("unknown dtype") {
    patch_sidecar("\"f64\"", "\"i16\"");
    REQUIRE(kind_of([&] { read_volume(path); }) ==
            IoError::Kind::unknown_dtype);
  }
  SECTION("unknown element order") {
    patch_sidecar("\"i-fastest\"", "\"k-fastest\"");
    REQUIRE(kind_of([&] { read_volume(path); }) == IoError::Kind::bad_header);
  }
  SECTION("nonpositive dims") {
    patch_sidecar("4,", "-4,");
    REQUIRE(kind_of([&] { read_volume(path); }) == IoError::Kind::bad_header);
  }
  SECTION("missing required field") {
    patch_sidecar("\"dtype\"", "\"dtypo\"");
    REQUIRE(kind_of([&] { read_volume(path); }) == IoError::Kind::bad_header);
  }
}

TEST_CASE("non-finite payloads are refused in both directions", "[io]") {
  TempDir dir("t3sr-io");
  const auto path = dir.file("vol.t3r");

  Volume3 x = random_volume({2, 2, 2}, 61);
  x(0, 0, 0) = std::numeric_limits<double>::infinity();
  REQUIRE(kind_of([&] { write_volume(x, path); }) ==
          IoError::Kind::bad_payload);
  REQUIRE_FALSE(std::filesystem::exists(path));

  // Craft the file pair by hand with a NaN in the payload.
  std::ofstream(path + ".json", std::ios::trunc)
      << R"({"dims":[2,1,1],"dtype":"f64","order":"i-fastest"})";
  const double vals[2] = {1.0, std::nan("")};
  std::ofstream(path, std::ios::binary | std::ios::trunc)
      .write(reinterpret_cast<const char*>(vals), sizeof(vals));
  REQUIRE(kind_of([&] { read_volume(path); }) == IoError::Kind::bad_payload);
}

TEST_CASE("failed writes leave no artifact behind", "[io]") {
  TempDir dir("t3sr-io");
  const auto path = dir.file("nosuchdir/vol.t3r");
  REQUIRE(kind_of([&] {
            write_volume(random_volume({4, 4, 4}, 71), path);
          }) == IoError::Kind::write_failed);
  REQUIRE_FALSE(std::filesystem::exists(path));

  VolumeWriteOptions opts;
  opts.dtype = "u8";
  REQUIRE(kind_of([&] {
            write_volume(random_volume({4, 4, 4}, 72), dir.file("v.t3r"),
                         opts);
          }) == IoError::Kind::unknown_dtype);
  REQUIRE_FALSE(std::filesystem::exists(dir.file("v.t3r")));
}

TEST_CASE("residual traces serialize as two-column CSV", "[io]") {
  TempDir dir("t3sr-io");
  const auto path = dir.file("trace.csv");
  write_trace_csv(path, {1.5, 0.25, 0.125});
  REQUIRE(slurp(path) == "sweep,residual\n0,1.5\n1,0.25\n2,0.125\n");
}

TEST_CASE("singular value series serialize as four-column CSV", "[io]") {
  TempDir dir("t3sr-io");
  const auto path = dir.file("sv.csv");
  Vector s1(2), s2(1), s3(2);
  s1 << 10.0, 0.5;
  s2 << 3.0;
  s3 << 2.0, 1.0;
  write_sv_csv(path, {s1, s2, s3}, {1, 1, 2});
  REQUIRE(slurp(path) ==
          "mode,index,sv,kept\n"
          "1,0,10,1\n"
          "1,1,0.5,0\n"
          "2,0,3,1\n"
          "3,0,2,1\n"
          "3,1,1,1\n");
}

TEST_CASE("high-precision values survive the CSV formatting", "[io]") {
  TempDir dir("t3sr-io");
  const auto path = dir.file("trace.csv");
  const double v = 0.12345678901234567;
  write_trace_csv(path, {v});
  const std::string text = slurp(path);
  const double back = std::stod(text.substr(text.rfind(",") + 1));
  REQUIRE(back == v);
}

TEST_CASE("run manifests round-trip through JSON", "[io]") {
  TempDir dir("t3sr-io");
  const auto path = dir.file("run.manifest.json");

  RunManifest m;
  m.command = "degrade";
  m.argv = {"degrade", "--in", "x.t3r", "--seed", "42"};
  m.params = {{"seed", "42"}, {"rate", "2"}};
  m.timings_s = {{"total", 1.25}, {"solve", 0.75}};
  m.version = "0.1.0";
  m.rng = "mt19937_64/box-muller";

  write_manifest(m, path);
  REQUIRE(read_manifest(path) == m);

  REQUIRE(kind_of([&] { read_manifest(dir.file("absent.json")); }) ==
          IoError::Kind::read_failed);
  std::ofstream(path, std::ios::trunc) << "{\"command\": 3}";
  REQUIRE(kind_of([&] { read_manifest(path); }) == IoError::Kind::bad_header);
}

TEST_CASE("metric reports round-trip through JSON", "[io]") {
  TempDir dir("t3sr-io");
  const auto path = dir.file("report.json");

  MetricReport r;
  r.psnr_db = 31.25;
  r.ssi = 0.875;
  r.runtime_s = 2.5;
  r.params = {{"mask", "otsu-dilate1"}};

  SECTION("without overlap score") {
    write_metric_report(r, path);
    const MetricReport back = read_metric_report(path);
    REQUIRE(back.psnr_db == r.psnr_db);
    REQUIRE(back.ssi == r.ssi);
    REQUIRE_FALSE(back.dice.has_value());
    REQUIRE(back.params == r.params);
  }
  SECTION("with overlap score") {
    r.dice = 0.9375;
    write_metric_report(r, path);
    const MetricReport back = read_metric_report(path);
    REQUIRE(back.dice == r.dice);
    REQUIRE(back.runtime_s == r.runtime_s);
  }
}
