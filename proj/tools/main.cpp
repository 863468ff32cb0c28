// t3sr: degrade / super-resolve / evaluate 3D volumes from the command
// line. Every artifact-producing run writes a <output>.manifest.json
// with the exact argument tokens, so runs can be replayed bit-exactly.

#include <array>
#include <chrono>
#include <cstdint>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "t3sr/cpd.hpp"
#include "t3sr/degradation.hpp"
#include "t3sr/io.hpp"
#include "t3sr/metrics.hpp"
#include "t3sr/tucker.hpp"
#include "t3sr/version.hpp"

namespace {

using namespace t3sr;

// Exit codes: 0 ok, 1 usage or parameter, 2 I/O, 3 dimension mismatch,
// 4 numeric divergence.
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitDims = 3;
constexpr int kExitDivergence = 4;

class StageClock {
 public:
  explicit StageClock(std::map<std::string, double>& sink) : sink_(sink) {}

  template <typename Fn>
  auto time(const std::string& stage, Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      sink_[stage] = seconds_since(start);
      sink_["total"] += sink_[stage];
    } else {
      auto result = fn();
      sink_[stage] = seconds_since(start);
      sink_["total"] += sink_[stage];
      return result;
    }
  }

 private:
  static double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         t0)
        .count();
  }

  std::map<std::string, double>& sink_;
};

std::array<double, 3> expand_sigma(const std::vector<double>& v) {
  if (v.size() == 1) return {v[0], v[0], v[0]};
  if (v.size() == 3) return {v[0], v[1], v[2]};
  throw ParameterError("--sigma takes one shared or three per-mode values");
}

std::array<Index, 3> expand_ranks(const std::vector<Index>& v) {
  if (v.size() == 1) return {v[0], v[0], v[0]};
  if (v.size() == 3) return {v[0], v[1], v[2]};
  throw ParameterError("--ranks takes one shared or three per-mode values");
}

std::string join_doubles(const std::array<double, 3>& v) {
  std::string s;
  for (int n = 0; n < 3; ++n)
    s += (n ? "," : "") + t3sr::detail::format_g17(v[n]);
  return s;
}

// Per-subcommand parameter bundles. CLI11 fills these; the run functions
// below consume them.
struct CommonDegradeParams {
  std::string in, out;
  std::vector<double> sigma{8.0, 8.0, 8.0};
  Index rate = 2;
  double epsilon = 1.0;
  double kernel_radius = 3.0;
  std::string dtype = "f64";
};

struct DegradeParams : CommonDegradeParams {
  double snr = 0.0;
  bool has_snr = false;
  std::uint64_t seed = 0;
};

struct CpdParams : CommonDegradeParams {
  Index rank = 500;
  int max_sweeps = 10;
  double tol = 1e-4;
  std::uint64_t seed = 0;
  std::string init = "seeded-random";
  std::string trace_csv;
};

struct TuckerParams : CommonDegradeParams {
  std::vector<Index> ranks{40, 40, 40};
  std::vector<double> sv_threshold;
  std::string sv_csv;
};

struct EvaluateParams {
  std::string ref, test, report;
  std::string mask_mode = "otsu-dilate1";
};

struct SpectrumParams {
  std::string in, out;
};

RunManifest manifest_stub(const std::string& command,
                          const std::vector<std::string>& argv) {
  RunManifest m;
  m.command = command;
  m.argv = argv;
  m.version = kVersion;
  m.rng = GaussianSampler::kAlgorithm;
  return m;
}

void add_operator_flags(CLI::App* cmd, CommonDegradeParams& p) {
  cmd->add_option("--sigma", p.sigma,
                  "Blur stddev in voxels, one shared or three per-mode")
      ->delimiter(',');
  cmd->add_option("--rate", p.rate, "Decimation rate per mode")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--epsilon", p.epsilon, "Tikhonov regularizer")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--kernel-radius", p.kernel_radius,
                  "Kernel truncation radius in sigmas")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--dtype", p.dtype, "Output scalar type")
      ->check(CLI::IsMember({"f32", "f64"}));
}

int run_degrade(const DegradeParams& p, const std::vector<std::string>& argv) {
  RunManifest m = manifest_stub("degrade", argv);
  StageClock clock(m.timings_s);

  VolumeHeader header;
  const Volume3 hr =
      clock.time("read", [&] { return read_volume(p.in, &header); });
  const auto sigmas = expand_sigma(p.sigma);
  const auto ops = make_mode_operators(hr.dims(), sigmas, p.rate, p.epsilon,
                                       p.kernel_radius);

  DegradationSpec spec;
  spec.sigmas = sigmas;
  spec.rate = p.rate;
  if (p.has_snr) spec.snr_db = p.snr;
  spec.seed = p.seed;
  const Volume3 lr =
      clock.time("degrade", [&] { return degrade(hr, spec, ops); });

  VolumeWriteOptions opts;
  opts.dtype = p.dtype;
  if (header.voxel_size)
    opts.voxel_size = {{(*header.voxel_size)[0] * double(p.rate),
                        (*header.voxel_size)[1] * double(p.rate),
                        (*header.voxel_size)[2] * double(p.rate)}};
  opts.provenance = {{"stage", "degraded"}, {"source", p.in}};
  clock.time("write", [&] { write_volume(lr, p.out, opts); });

  m.params = {{"sigma", join_doubles(sigmas)},
              {"rate", std::to_string(p.rate)},
              {"epsilon", t3sr::detail::format_g17(p.epsilon)},
              {"kernel_radius", t3sr::detail::format_g17(p.kernel_radius)},
              {"snr_db", p.has_snr ? t3sr::detail::format_g17(p.snr) : "none"},
              {"seed", std::to_string(p.seed)},
              {"dtype", p.dtype}};
  write_manifest(m, p.out + ".manifest.json");
  std::cout << "wrote " << p.out << " (" << lr.extent(1) << "x" << lr.extent(2)
            << "x" << lr.extent(3) << ")\n";
  return 0;
}

int run_sr_cpd(const CpdParams& p, const std::vector<std::string>& argv) {
  RunManifest m = manifest_stub("sr-cpd", argv);
  StageClock clock(m.timings_s);

  const Volume3 lr = clock.time("read", [&] { return read_volume(p.in); });
  const auto sigmas = expand_sigma(p.sigma);
  const Dims3 hr_dims{lr.extent(1) * p.rate, lr.extent(2) * p.rate,
                      lr.extent(3) * p.rate};
  const auto ops = make_mode_operators(hr_dims, sigmas, p.rate, p.epsilon,
                                       p.kernel_radius);

  CpdConfig cfg;
  cfg.rank = p.rank;
  cfg.max_sweeps = p.max_sweeps;
  cfg.rel_tol = p.tol;
  cfg.epsilon = p.epsilon;
  cfg.seed = p.seed;
  cfg.init = p.init == "hosvd-upsampled" ? CpdInit::hosvd_upsampled
                                         : CpdInit::seeded_random;

  const TfSisrResult res =
      clock.time("solve", [&] { return tf_sisr(lr, ops, cfg); });

  VolumeWriteOptions opts;
  opts.dtype = p.dtype;
  opts.provenance = {{"stage", "sr-cpd"}, {"source", p.in}};
  clock.time("write", [&] { write_volume(res.x_hat, p.out, opts); });
  if (!p.trace_csv.empty()) write_trace_csv(p.trace_csv, res.residual_trace);

  m.params = {{"sigma", join_doubles(sigmas)},
              {"rate", std::to_string(p.rate)},
              {"epsilon", t3sr::detail::format_g17(p.epsilon)},
              {"kernel_radius", t3sr::detail::format_g17(p.kernel_radius)},
              {"rank", std::to_string(p.rank)},
              {"max_sweeps", std::to_string(p.max_sweeps)},
              {"tol", t3sr::detail::format_g17(p.tol)},
              {"seed", std::to_string(p.seed)},
              {"init", p.init},
              {"sweeps_run", std::to_string(res.sweeps)},
              {"final_residual",
               t3sr::detail::format_g17(res.residual_trace.back())},
              {"dtype", p.dtype}};
  write_manifest(m, p.out + ".manifest.json");
  std::cout << "wrote " << p.out << " after " << res.sweeps << " sweeps ("
            << m.timings_s["solve"] << " s)\n";
  return 0;
}

int run_sr_tucker(const TuckerParams& p,
                  const std::vector<std::string>& argv) {
  RunManifest m = manifest_stub("sr-tucker", argv);
  StageClock clock(m.timings_s);

  const Volume3 lr = clock.time("read", [&] { return read_volume(p.in); });
  const auto sigmas = expand_sigma(p.sigma);
  const Dims3 hr_dims{lr.extent(1) * p.rate, lr.extent(2) * p.rate,
                      lr.extent(3) * p.rate};
  const auto ops = make_mode_operators(hr_dims, sigmas, p.rate, p.epsilon,
                                       p.kernel_radius);

  TruncationRule rule;
  std::string rule_echo;
  if (!p.sv_threshold.empty()) {
    const auto t = expand_sigma(p.sv_threshold);
    rule = TruncationRule::thresholds(t[0], t[1], t[2]);
    rule_echo = "threshold:" + join_doubles(t);
  } else {
    // Component counts are capped at each mode length so the default
    // stays valid on small volumes.
    auto r = expand_ranks(p.ranks);
    for (int n = 0; n < 3; ++n) r[n] = std::min(r[n], lr.extent(n + 1));
    rule = TruncationRule::counts(r[0], r[1], r[2]);
    rule_echo = "count:" + std::to_string(r[0]) + "," + std::to_string(r[1]) +
                "," + std::to_string(r[2]);
  }

  const TdSisrResult res =
      clock.time("solve", [&] { return td_sisr(lr, ops, rule); });
  if (res.model.truncation_clamped)
    std::cerr << "warning: threshold removed every component in some mode; "
                 "kept the leading one\n";

  VolumeWriteOptions opts;
  opts.dtype = p.dtype;
  opts.provenance = {{"stage", "sr-tucker"}, {"source", p.in}};
  clock.time("write", [&] { write_volume(res.x_hat, p.out, opts); });
  if (!p.sv_csv.empty())
    write_sv_csv(p.sv_csv, res.model.sv,
                 {res.model.core.extent(1), res.model.core.extent(2),
                  res.model.core.extent(3)});

  m.params = {{"sigma", join_doubles(sigmas)},
              {"rate", std::to_string(p.rate)},
              {"epsilon", t3sr::detail::format_g17(p.epsilon)},
              {"kernel_radius", t3sr::detail::format_g17(p.kernel_radius)},
              {"rule", rule_echo},
              {"kept", std::to_string(res.model.core.extent(1)) + "," +
                           std::to_string(res.model.core.extent(2)) + "," +
                           std::to_string(res.model.core.extent(3))},
              {"dtype", p.dtype}};
  write_manifest(m, p.out + ".manifest.json");
  std::cout << "wrote " << p.out << " (" << m.timings_s["solve"] << " s)\n";
  return 0;
}

int run_evaluate(const EvaluateParams& p,
                 const std::vector<std::string>& argv) {
  RunManifest m = manifest_stub("evaluate", argv);
  StageClock clock(m.timings_s);

  const Volume3 ref = clock.time("read", [&] { return read_volume(p.ref); });
  const Volume3 test = read_volume(p.test);

  MetricReport report;
  clock.time("metrics", [&] {
    if (p.mask_mode == "otsu-dilate1") {
      const VoxelMask mask = otsu_dilate1_mask(ref);
      report.psnr_db = psnr(ref, test, mask);
      report.ssi = ssi(ref, test, mask);
      report.dice = dice(threshold_segment(ref, OtsuThreshold{}),
                         threshold_segment(test, OtsuThreshold{}));
    } else {
      const VoxelMask mask = full_mask(ref.dims());
      report.psnr_db = psnr(ref, test, mask);
      report.ssi = ssi(ref, test, mask);
    }
  });

  // Echo the producing run's configuration and solve time when its
  // manifest sits next to the test volume.
  report.params["mask_mode"] = p.mask_mode;
  report.params["ref"] = p.ref;
  report.params["test"] = p.test;
  const std::string test_manifest = p.test + ".manifest.json";
  if (std::filesystem::exists(test_manifest)) {
    const RunManifest producer = read_manifest(test_manifest);
    report.params["producer"] = producer.command;
    for (const auto& [k, v] : producer.params)
      report.params["producer." + k] = v;
    if (auto it = producer.timings_s.find("solve");
        it != producer.timings_s.end())
      report.runtime_s = it->second;
  }

  clock.time("write", [&] { write_metric_report(report, p.report); });
  m.params = report.params;
  write_manifest(m, p.report + ".manifest.json");

  std::cout << "psnr_db=" << t3sr::detail::format_g17(report.psnr_db)
            << " ssi=" << t3sr::detail::format_g17(report.ssi);
  if (report.dice)
    std::cout << " dice=" << t3sr::detail::format_g17(*report.dice);
  std::cout << "\n";
  return 0;
}

int run_sv_spectrum(const SpectrumParams& p,
                    const std::vector<std::string>& argv) {
  RunManifest m = manifest_stub("sv-spectrum", argv);
  StageClock clock(m.timings_s);

  const Volume3 x = clock.time("read", [&] { return read_volume(p.in); });
  const TuckerModel model = clock.time("solve", [&] { return hosvd(x); });
  const auto spectra = sv_spectrum(model);
  clock.time("write", [&] {
    write_sv_csv(p.out, spectra,
                 {spectra[0].size(), spectra[1].size(), spectra[2].size()});
  });

  write_manifest(m, p.out + ".manifest.json");
  std::cout << "wrote " << p.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D single-volume super-resolution toolkit"};
  app.require_subcommand(1);

  int threads = 0;
  app.add_option("--threads", threads,
                 "Cap dense-algebra worker threads (0 = library default)")
      ->check(CLI::NonNegativeNumber);

  DegradeParams dp;
  CLI::App* degrade_cmd =
      app.add_subcommand("degrade", "Blur, decimate and add noise");
  degrade_cmd->add_option("--in", dp.in, "HR input volume (.t3r)")
      ->required();
  degrade_cmd->add_option("--out", dp.out, "LR output volume (.t3r)")
      ->required();
  add_operator_flags(degrade_cmd, dp);
  degrade_cmd->add_option("--snr", dp.snr, "Noise level in dB SNR");
  degrade_cmd->add_option("--seed", dp.seed, "Noise seed");

  CpdParams cp;
  CLI::App* cpd_cmd = app.add_subcommand(
      "sr-cpd", "Super-resolve via rank-R factor fitting");
  cpd_cmd->add_option("--in", cp.in, "LR input volume (.t3r)")->required();
  cpd_cmd->add_option("--out", cp.out, "HR output volume (.t3r)")->required();
  add_operator_flags(cpd_cmd, cp);
  cpd_cmd->add_option("--ranks", cp.rank, "Number of rank-1 terms")
      ->check(CLI::PositiveNumber);
  cpd_cmd->add_option("--max-sweeps", cp.max_sweeps, "Sweep cap")
      ->check(CLI::PositiveNumber);
  cpd_cmd->add_option("--tol", cp.tol, "Relative residual-change stop")
      ->check(CLI::PositiveNumber);
  cpd_cmd->add_option("--seed", cp.seed, "Factor init seed");
  cpd_cmd->add_option("--init", cp.init, "Factor initialization")
      ->check(CLI::IsMember({"seeded-random", "hosvd-upsampled"}));
  cpd_cmd->add_option("--trace", cp.trace_csv, "Residual trace CSV path");

  TuckerParams tp;
  CLI::App* tucker_cmd = app.add_subcommand(
      "sr-tucker", "Super-resolve via truncated orthogonal decomposition");
  tucker_cmd->add_option("--in", tp.in, "LR input volume (.t3r)")->required();
  tucker_cmd->add_option("--out", tp.out, "HR output volume (.t3r)")
      ->required();
  add_operator_flags(tucker_cmd, tp);
  CLI::Option* ranks_opt =
      tucker_cmd
          ->add_option("--ranks", tp.ranks,
                       "Components kept per mode (capped at mode length)")
          ->delimiter(',');
  tucker_cmd
      ->add_option("--sv-threshold", tp.sv_threshold,
                   "Keep components with singular value >= threshold")
      ->delimiter(',')
      ->excludes(ranks_opt);
  tucker_cmd->add_option("--sv-csv", tp.sv_csv, "Singular value CSV path");

  EvaluateParams ep;
  CLI::App* eval_cmd =
      app.add_subcommand("evaluate", "Score a reconstruction against a reference");
  eval_cmd->add_option("--ref", ep.ref, "Reference volume (.t3r)")
      ->required();
  eval_cmd->add_option("--test", ep.test, "Volume under test (.t3r)")
      ->required();
  eval_cmd->add_option("--report", ep.report, "Metric report JSON path")
      ->required();
  eval_cmd->add_option("--mask-mode", ep.mask_mode, "Metric domain")
      ->check(CLI::IsMember({"otsu-dilate1", "full"}));

  SpectrumParams sp;
  CLI::App* spectrum_cmd = app.add_subcommand(
      "sv-spectrum", "Export mode-wise singular values as CSV");
  spectrum_cmd->add_option("--in", sp.in, "Input volume (.t3r)")->required();
  spectrum_cmd->add_option("--out", sp.out, "Output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  dp.has_snr = degrade_cmd->count("--snr") > 0;

  if (threads > 0) Eigen::setNbThreads(threads);
  const std::vector<std::string> tokens(argv + 1, argv + argc);

  try {
    if (degrade_cmd->parsed()) return run_degrade(dp, tokens);
    if (cpd_cmd->parsed()) return run_sr_cpd(cp, tokens);
    if (tucker_cmd->parsed()) return run_sr_tucker(tp, tokens);
    if (eval_cmd->parsed()) return run_evaluate(ep, tokens);
    if (spectrum_cmd->parsed()) return run_sv_spectrum(sp, tokens);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDims;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
