#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "t3sr/errors.hpp"
#include "t3sr/metrics.hpp"
#include "t3sr/volume.hpp"

namespace t3sr {

// The on-disk payload is little-endian by definition; this library does
// not byte-swap.
static_assert(std::endian::native == std::endian::little,
              "volume file payloads are little-endian");

/// Sidecar metadata for a stored volume. The payload lives in `<name>.t3r`
/// and this header in `<name>.t3r.json` next to it.
struct VolumeHeader {
  Dims3 dims{0, 0, 0};
  std::string dtype = "f64";  // "f32" | "f64"
  std::optional<std::array<double, 3>> voxel_size;
  std::map<std::string, std::string> provenance;
};

struct VolumeWriteOptions {
  std::string dtype = "f64";
  std::optional<std::array<double, 3>> voxel_size;
  std::map<std::string, std::string> provenance;
};

namespace detail {

inline std::filesystem::path sidecar_path(const std::filesystem::path& p) {
  return std::filesystem::path(p.string() + ".json");
}

// Writes through a temp file and renames, so a failed write never leaves
// a truncated artifact at the destination.
inline void write_file_atomic(const std::filesystem::path& path,
                              const char* data, std::size_t len) {
  const std::filesystem::path tmp(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out.is_open())
      throw IoError(IoError::Kind::write_failed,
                    "cannot open for writing: " + tmp.string());
    out.write(data, static_cast<std::streamsize>(len));
    out.flush();
    if (!out.good()) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError(IoError::Kind::write_failed,
                    "short write: " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError(IoError::Kind::write_failed,
                  "cannot move into place: " + path.string());
  }
}

inline void write_file_atomic(const std::filesystem::path& path,
                              const std::string& text) {
  write_file_atomic(path, text.data(), text.size());
}

inline std::string read_file(const std::filesystem::path& path,
                             IoError::Kind missing_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in.is_open())
    throw IoError(missing_kind, "cannot open: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (!in.good() && !in.eof())
    throw IoError(IoError::Kind::read_failed, "read failed: " + path.string());
  return bytes;
}

inline std::string format_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline void write_volume(const Volume3& x, const std::filesystem::path& path,
                         const VolumeWriteOptions& opts = {}) {
  if (opts.dtype != "f32" && opts.dtype != "f64")
    throw IoError(IoError::Kind::unknown_dtype,
                  "unknown dtype: " + opts.dtype);
  if (!x.all_finite())
    throw IoError(IoError::Kind::bad_payload,
                  "refusing to write non-finite volume: " + path.string());

  std::string payload;
  if (opts.dtype == "f64") {
    payload.resize(static_cast<std::size_t>(x.size()) * sizeof(double));
    std::memcpy(payload.data(), x.data().data(), payload.size());
  } else {
    std::vector<float> narrow(static_cast<std::size_t>(x.size()));
    for (Index n = 0; n < x.size(); ++n)
      narrow[static_cast<std::size_t>(n)] = static_cast<float>(x.data()[n]);
    payload.resize(narrow.size() * sizeof(float));
    std::memcpy(payload.data(), narrow.data(), payload.size());
  }

  nlohmann::json header;
  header["dims"] = {x.extent(1), x.extent(2), x.extent(3)};
  header["dtype"] = opts.dtype;
  header["order"] = "i-fastest";
  if (opts.voxel_size)
    header["voxel_size"] = {(*opts.voxel_size)[0], (*opts.voxel_size)[1],
                            (*opts.voxel_size)[2]};
  if (!opts.provenance.empty()) header["provenance"] = opts.provenance;

  detail::write_file_atomic(path, payload);
  detail::write_file_atomic(detail::sidecar_path(path),
                            header.dump(2) + "\n");
}

inline Volume3 read_volume(const std::filesystem::path& path,
                           VolumeHeader* header_out = nullptr) {
  const auto sidecar = detail::sidecar_path(path);
  if (!std::filesystem::exists(sidecar))
    throw IoError(IoError::Kind::missing_sidecar,
                  "missing sidecar: " + sidecar.string());

  VolumeHeader h;
  try {
    const nlohmann::json j = nlohmann::json::parse(
        detail::read_file(sidecar, IoError::Kind::missing_sidecar));
    const auto dims = j.at("dims");
    if (!dims.is_array() || dims.size() != 3)
      throw IoError(IoError::Kind::bad_header,
                    "dims must be a 3-array: " + sidecar.string());
    for (int n = 0; n < 3; ++n) h.dims[n] = dims.at(n).get<Index>();
    h.dtype = j.at("dtype").get<std::string>();
    if (j.at("order").get<std::string>() != "i-fastest")
      throw IoError(IoError::Kind::bad_header,
                    "unsupported element order: " + sidecar.string());
    if (j.contains("voxel_size")) {
      std::array<double, 3> vs{};
      for (int n = 0; n < 3; ++n) vs[n] = j.at("voxel_size").at(n).get<double>();
      h.voxel_size = vs;
    }
    if (j.contains("provenance"))
      h.provenance =
          j.at("provenance").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoError::Kind::bad_header,
                  "bad sidecar " + sidecar.string() + ": " + e.what());
  }
  if (h.dims[0] < 1 || h.dims[1] < 1 || h.dims[2] < 1)
    throw IoError(IoError::Kind::bad_header,
                  "dims must be positive: " + sidecar.string());
  if (h.dtype != "f32" && h.dtype != "f64")
    throw IoError(IoError::Kind::unknown_dtype, "unknown dtype: " + h.dtype);

  const std::string payload =
      detail::read_file(path, IoError::Kind::read_failed);
  const auto count = static_cast<std::size_t>(element_count(h.dims));
  const std::size_t scalar = h.dtype == "f64" ? sizeof(double) : sizeof(float);
  if (payload.size() != count * scalar)
    throw IoError(IoError::Kind::length_mismatch,
                  "payload holds " + std::to_string(payload.size()) +
                      " bytes, header implies " +
                      std::to_string(count * scalar) + ": " + path.string());

  Vector data(static_cast<Index>(count));
  if (h.dtype == "f64") {
    std::memcpy(data.data(), payload.data(), payload.size());
  } else {
    std::vector<float> narrow(count);
    std::memcpy(narrow.data(), payload.data(), payload.size());
    for (std::size_t n = 0; n < count; ++n)
      data[static_cast<Index>(n)] = narrow[n];
  }

  Volume3 out(h.dims, std::move(data));
  if (!out.all_finite())
    throw IoError(IoError::Kind::bad_payload,
                  "payload contains non-finite values: " + path.string());
  if (header_out) *header_out = std::move(h);
  return out;
}

/// Residual-by-sweep trace; row 0 is the pre-iteration residual.
inline void write_trace_csv(const std::filesystem::path& path,
                            const std::vector<double>& trace) {
  std::string text = "sweep,residual\n";
  for (std::size_t s = 0; s < trace.size(); ++s)
    text += std::to_string(s) + "," + detail::format_g17(trace[s]) + "\n";
  detail::write_file_atomic(path, text);
}

/// Mode-wise singular value series. `kept` marks the components a
/// truncation rule retained; pass the full lengths when nothing was cut.
inline void write_sv_csv(const std::filesystem::path& path,
                         const std::array<Vector, 3>& spectra,
                         const std::array<Index, 3>& kept) {
  std::string text = "mode,index,sv,kept\n";
  for (int mode = 1; mode <= 3; ++mode) {
    const Vector& s = spectra[mode - 1];
    for (Index i = 0; i < s.size(); ++i)
      text += std::to_string(mode) + "," + std::to_string(i) + "," +
              detail::format_g17(s[i]) + "," +
              (i < kept[mode - 1] ? "1" : "0") + "\n";
  }
  detail::write_file_atomic(path, text);
}

/// Everything needed to rerun a pipeline invocation and to audit it:
/// the subcommand, the exact argument tokens (program name excluded),
/// the resolved parameters, per-stage timings, and the build's version
/// and noise-generator tags.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::map<std::string, std::string> params;
  std::map<std::string, double> timings_s;
  std::string version;
  std::string rng;

  bool operator==(const RunManifest&) const = default;
};

inline void write_manifest(const RunManifest& m,
                           const std::filesystem::path& path) {
  nlohmann::json j;
  j["command"] = m.command;
  j["argv"] = m.argv;
  j["params"] = m.params;
  j["timings_s"] = m.timings_s;
  j["version"] = m.version;
  j["rng"] = m.rng;
  detail::write_file_atomic(path, j.dump(2) + "\n");
}

inline RunManifest read_manifest(const std::filesystem::path& path) {
  RunManifest m;
  try {
    const nlohmann::json j = nlohmann::json::parse(
        detail::read_file(path, IoError::Kind::read_failed));
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.params = j.at("params").get<std::map<std::string, std::string>>();
    m.timings_s = j.at("timings_s").get<std::map<std::string, double>>();
    m.version = j.at("version").get<std::string>();
    m.rng = j.at("rng").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoError::Kind::bad_header,
                  "bad manifest " + path.string() + ": " + e.what());
  }
  return m;
}

inline void write_metric_report(const MetricReport& r,
                                const std::filesystem::path& path) {
  nlohmann::json j;
  j["psnr_db"] = r.psnr_db;
  j["ssi"] = r.ssi;
  if (r.dice) j["dice"] = *r.dice;
  j["runtime_s"] = r.runtime_s;
  j["params"] = r.params;
  detail::write_file_atomic(path, j.dump(2) + "\n");
}

inline MetricReport read_metric_report(const std::filesystem::path& path) {
  MetricReport r;
  try {
    const nlohmann::json j = nlohmann::json::parse(
        detail::read_file(path, IoError::Kind::read_failed));
    r.psnr_db = j.at("psnr_db").get<double>();
    r.ssi = j.at("ssi").get<double>();
    if (j.contains("dice")) r.dice = j.at("dice").get<double>();
    r.runtime_s = j.at("runtime_s").get<double>();
    if (j.contains("params"))
      r.params = j.at("params").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoError::Kind::bad_header,
                  "bad report " + path.string() + ": " + e.what());
  }
  return r;
}

}  // namespace t3sr
