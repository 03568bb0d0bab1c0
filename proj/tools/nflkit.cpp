// nflkit: data-driven synthesis, verification, and fine-tuning of neural
// network controllers for unknown discrete-time linear plants.
//
// Subcommands: collect | train | verify | finetune | report.
// Every run is driven by one JSON config (see configs/ and README.md) and
// writes a manifest.json capturing the full configuration snapshot, input
// digests, outputs, and timings.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "nfl/io.hpp"
#include "nfl/plant.hpp"
#include "nfl/synthesis.hpp"
#include "nfl/version.hpp"

namespace fs = std::filesystem;
using nfl::io::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNotConverged = 4;
constexpr int kExitSynthesisInfeasible = 5;
constexpr int kExitVerifyInfeasible = 6;

// ---------------------------------------------------------------------------
// Built-in scenario presets.

const char* kVehiclePreset = R"json({
  "plant": {"preset": "vehicle-lateral"},
  "box": {"lower": [-2, -5, -1, -5], "upper": [2, 5, 1, 5]},
  "data": {"T": 50, "excitation": {"kind": "uniform", "lo": -1, "hi": 1}, "seed": 1},
  "controller": {"hidden": [10, 10]},
  "expert": {"kind": "lqr",
             "Q": [[1,0,0,0],[0,0.1,0,0],[0,0,1,0],[0,0,0,0.1]],
             "R": [[1]]},
  "train": {"eta1": 100, "eta2": 100, "rho": 1000, "sigma": 0.005, "max_outer": 20,
            "inner_epochs": 200, "adam_lr": 0.001, "demo_count": 500, "seed": 1},
  "finetune": {"eta2": 100, "eta3": 0.01, "rho": 1000, "sigma": 0.005,
               "sigma_prime": 0.0001, "max_outer": 15, "max_inner": 200}
})json";

const char* kScalarPreset = R"json({
  "plant": {"A": [[0.5]], "B": [[1.0]], "dt": 0.02},
  "box": {"lower": [-1], "upper": [1]},
  "data": {"T": 10, "excitation": {"kind": "uniform", "lo": -1, "hi": 1}, "seed": 1},
  "controller": {"hidden": [2]},
  "expert": {"kind": "lqr", "Q": [[1]], "R": [[1]]},
  "train": {"eta1": 100, "eta2": 100, "rho": 1000, "sigma": 0.005, "max_outer": 20,
            "inner_epochs": 200, "adam_lr": 0.001, "demo_count": 200, "seed": 1},
  "finetune": {"eta2": 100, "eta3": 0.01, "rho": 1000, "sigma": 0.005,
               "sigma_prime": 0.0001, "max_outer": 15, "max_inner": 200}
})json";

json load_config(const std::string& spec) {
  if (fs::exists(spec)) return nfl::io::load_json(spec);
  if (spec == "vehicle-lateral") return json::parse(kVehiclePreset);
  if (spec == "scalar-demo") return json::parse(kScalarPreset);
  throw nfl::ConfigError("config is neither a file nor a known preset: " + spec);
}

// A manifest written by a previous run stores its config under "config".
json unwrap_manifest(json cfg) {
  if (cfg.contains("config") && cfg.contains("command")) return cfg.at("config");
  return cfg;
}

nfl::PlantModel<double> parse_plant(const json& cfg) {
  const auto& p = cfg.at("plant");
  if (p.contains("preset")) {
    const auto name = p.at("preset").get<std::string>();
    if (name == "vehicle-lateral") return nfl::vehicle_lateral_plant();
    throw nfl::ConfigError("unknown plant preset: " + name);
  }
  nfl::PlantModel<double> plant;
  plant.A = nfl::io::matrix_from_json(p.at("A"));
  plant.B = nfl::io::matrix_from_json(p.at("B"));
  plant.dt = p.value("dt", 1.0);
  plant.validate();
  return plant;
}

nfl::StateBox<double> parse_box(const json& cfg) {
  const auto& b = cfg.at("box");
  const auto lo = b.at("lower").get<std::vector<double>>();
  const auto hi = b.at("upper").get<std::vector<double>>();
  return nfl::StateBox<double>::from_bounds(
      Eigen::Map<const nfl::Vecd>(lo.data(), nfl::Index(lo.size())),
      Eigen::Map<const nfl::Vecd>(hi.data(), nfl::Index(hi.size())));
}

nfl::ExcitationSpec parse_excitation(const json& data) {
  const auto& e = data.at("excitation");
  const auto kind = e.at("kind").get<std::string>();
  if (kind == "uniform") return nfl::UniformExcitation{e.value("lo", -1.0), e.value("hi", 1.0)};
  if (kind == "gaussian") return nfl::GaussianExcitation{e.value("sigma", 1.0)};
  throw nfl::ConfigError("unknown excitation kind: " + kind);
}

nfl::ExpertSpec parse_expert(const json& cfg) {
  const auto& e = cfg.at("expert");
  const auto kind = e.at("kind").get<std::string>();
  if (kind == "lqr")
    return nfl::LqrExpert{nfl::io::matrix_from_json(e.at("Q")),
                          nfl::io::matrix_from_json(e.at("R"))};
  if (kind == "gain") return nfl::GainExpert{nfl::io::matrix_from_json(e.at("K"))};
  throw nfl::ConfigError("unknown expert kind: " + kind);
}

nfl::CertifyOptions parse_certify_options(const json& cfg, double solver_tol_override) {
  nfl::CertifyOptions opts;
  if (cfg.contains("verify")) {
    opts.margin_scale = cfg.at("verify").value("margin_scale", opts.margin_scale);
    opts.q2_cap = cfg.at("verify").value("q2_cap", opts.q2_cap);
  }
  if (cfg.contains("solver")) {
    opts.solver.gap_tol = cfg.at("solver").value("gap_tol", opts.solver.gap_tol);
    opts.solver.max_stages = cfg.at("solver").value("max_stages", opts.solver.max_stages);
  }
  if (solver_tol_override > 0) opts.solver.gap_tol = solver_tol_override;
  return opts;
}

nfl::SynthesisConfig parse_train(const json& cfg, double solver_tol) {
  nfl::SynthesisConfig sc;
  const auto& t = cfg.at("train");
  sc.eta1 = t.value("eta1", sc.eta1);
  sc.eta2 = t.value("eta2", sc.eta2);
  sc.rho = t.value("rho", sc.rho);
  sc.sigma = t.value("sigma", sc.sigma);
  sc.max_outer = t.value("max_outer", sc.max_outer);
  sc.adam.epochs = t.value("inner_epochs", sc.adam.epochs);
  sc.adam.lr = t.value("adam_lr", sc.adam.lr);
  sc.seed = t.value("seed", sc.seed);
  sc.certify = parse_certify_options(cfg, solver_tol);
  return sc;
}

nfl::FinetuneConfig parse_finetune(const json& cfg, double solver_tol) {
  nfl::FinetuneConfig fc;
  if (cfg.contains("finetune")) {
    const auto& f = cfg.at("finetune");
    fc.eta2 = f.value("eta2", fc.eta2);
    fc.eta3 = f.value("eta3", fc.eta3);
    fc.rho = f.value("rho", fc.rho);
    fc.sigma = f.value("sigma", fc.sigma);
    fc.sigma_prime = f.value("sigma_prime", fc.sigma_prime);
    fc.max_outer = f.value("max_outer", fc.max_outer);
    fc.max_inner = f.value("max_inner", fc.max_inner);
  }
  fc.certify = parse_certify_options(cfg, solver_tol);
  return fc;
}

std::vector<nfl::Index> parse_hidden(const json& cfg) {
  return cfg.at("controller").at("hidden").get<std::vector<nfl::Index>>();
}

struct CommonArgs {
  std::string config;
  std::string out_dir = ".";
  std::string data_dir;
  std::string controller;
  long seed = -1;
  int jobs = 1;
  double solver_tol = -1.0;
};

void add_digest(nfl::io::RunManifest& man, const fs::path& p) {
  if (fs::exists(p) && fs::is_regular_file(p)) man.inputs[p.string()] = nfl::io::sha256_file(p);
}

void add_data_digests(nfl::io::RunManifest& man, const fs::path& dir) {
  for (const char* f : {"u.csv", "x0.csv", "x1.csv", "meta.json"}) add_digest(man, dir / f);
}

// ---------------------------------------------------------------------------

int cmd_collect(const CommonArgs& args) {
  json cfg = unwrap_manifest(load_config(args.config));
  if (args.seed >= 0) cfg["data"]["seed"] = args.seed;
  const auto plant = parse_plant(cfg);
  const auto box = parse_box(cfg);
  const auto& d = cfg.at("data");
  const nfl::Index T = d.at("T").get<nfl::Index>();
  const auto seed = d.value("seed", std::uint64_t(1));
  const double rank_tol = d.value("rank_tol", 1e-9);

  const auto tic = std::chrono::steady_clock::now();
  const auto data = nfl::collect(plant, box, T, parse_excitation(d), seed, rank_tol);

  const fs::path out(args.out_dir);
  nfl::io::save_experiment(out, data, seed);

  nfl::io::RunManifest man;
  man.command = "collect";
  man.config = cfg;
  add_digest(man, args.config);
  for (const char* f : {"u.csv", "x0.csv", "x1.csv", "meta.json"})
    man.outputs.push_back((out / f).string());
  man.timings_s["total"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();
  nfl::io::save_manifest(out / "manifest.json", man);

  if (!data.pe_ok) {
    std::cerr << "collected data is not persistently exciting (rank condition failed)\n";
    return kExitData;
  }
  std::cout << "collected T=" << data.T() << " samples, pe_ok=true\n";
  return kExitOk;
}

int run_one_training(const json& cfg, const CommonArgs& args, std::uint64_t seed,
                     const fs::path& out) {
  const auto plant = parse_plant(cfg);
  const auto box = parse_box(cfg);
  const fs::path data_dir =
      args.data_dir.empty() ? fs::path(cfg.at("data").value("dir", "data")) : fs::path(args.data_dir);
  if (!fs::exists(data_dir / "u.csv")) {
    std::cerr << "missing data file: " << (data_dir / "u.csv") << "\n";
    return kExitConfig;
  }
  const auto data = nfl::io::load_experiment(data_dir);
  if (!data.pe_ok) {
    std::cerr << "data directory holds non-persistently-exciting data\n";
    return kExitData;
  }

  nfl::SynthesisConfig sc = parse_train(cfg, args.solver_tol);
  sc.seed = seed;
  const auto demo_count = cfg.at("train").value("demo_count", nfl::Index(500));
  const auto demos =
      nfl::generate_expert_demos(plant, box, parse_expert(cfg), demo_count, seed + 0x9e3779b9ull);

  const auto tic = std::chrono::steady_clock::now();
  const auto result = nfl::synthesize(data, box, parse_hidden(cfg), demos, sc);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();

  fs::create_directories(out);
  nfl::io::save_controller(out / "controller.json", result.nn);
  nfl::io::save_trace_csv(out / "trace.csv", result.trace);
  if (result.certificate) nfl::io::save_certificate(out / "certificate.json", *result.certificate);

  nfl::io::RunManifest man;
  man.command = "train";
  man.config = cfg;
  man.config["train"]["seed"] = seed;
  add_digest(man, args.config);
  add_data_digests(man, data_dir);
  man.outputs.push_back((out / "controller.json").string());
  man.outputs.push_back((out / "trace.csv").string());
  if (result.certificate) man.outputs.push_back((out / "certificate.json").string());
  man.timings_s["total"] = wall;
  nfl::io::save_manifest(out / "manifest.json", man);

  switch (result.status) {
    case nfl::SynthesisStatus::Converged:
      std::cout << "seed " << seed << ": converged and verified in "
                << result.trace.iters.size() << " outer iterations\n";
      return kExitOk;
    case nfl::SynthesisStatus::SdpInfeasible:
      std::cerr << "seed " << seed << ": stability SDP infeasible at iteration "
                << result.sdp_failure_iter << "\n";
      return kExitSynthesisInfeasible;
    default:
      std::cerr << "seed " << seed << ": did not converge within the iteration budget\n";
      return kExitNotConverged;
  }
}

int cmd_train(const CommonArgs& args) {
  json cfg = unwrap_manifest(load_config(args.config));
  if (args.seed >= 0) cfg["train"]["seed"] = args.seed;

  std::vector<std::uint64_t> seeds;
  if (cfg.at("train").contains("seeds"))
    seeds = cfg.at("train").at("seeds").get<std::vector<std::uint64_t>>();
  else
    seeds.push_back(cfg.at("train").value("seed", std::uint64_t(1)));

  const fs::path out(args.out_dir);
  if (seeds.size() == 1) return run_one_training(cfg, args, seeds[0], out);

  // Seed sweep: independent runs, optionally in parallel.
  std::vector<int> codes(seeds.size(), 0);
  const int jobs = std::max(1, args.jobs);
  std::vector<std::thread> pool;
  std::atomic<size_t> next{0};
  for (int w = 0; w < jobs; ++w)
    pool.emplace_back([&] {
      for (size_t i = next.fetch_add(1); i < seeds.size(); i = next.fetch_add(1))
        codes[i] = run_one_training(cfg, args, seeds[i],
                                    out / ("seed-" + std::to_string(seeds[i])));
    });
  for (auto& th : pool) th.join();
  int worst = kExitOk;
  for (int c : codes) worst = std::max(worst, c);
  return worst;
}

int cmd_verify(const CommonArgs& args) {
  json cfg = unwrap_manifest(load_config(args.config));
  const auto box = parse_box(cfg);
  if (args.controller.empty()) throw nfl::ConfigError("--controller is required for verify");
  const auto nn = nfl::io::load_controller(args.controller);
  const fs::path data_dir =
      args.data_dir.empty() ? fs::path(cfg.at("data").value("dir", "data")) : fs::path(args.data_dir);
  const auto data = nfl::io::load_experiment(data_dir);

  const auto tic = std::chrono::steady_clock::now();
  const auto outcome =
      nfl::verify_fixed_controller(nn, data, box, parse_certify_options(cfg, args.solver_tol));
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();

  const fs::path out(args.out_dir);
  fs::create_directories(out);
  nfl::io::RunManifest man;
  man.command = "verify";
  man.config = cfg;
  add_digest(man, args.config);
  add_digest(man, args.controller);
  add_data_digests(man, data_dir);
  man.timings_s["total"] = wall;

  if (outcome.status == nfl::CertifyStatus::Certified) {
    nfl::io::save_certificate(out / "certificate.json", *outcome.certificate);
    man.outputs.push_back((out / "certificate.json").string());
    nfl::io::save_manifest(out / "manifest.json", man);
    std::cout << "certified: log det Q1 = " << outcome.certificate->log_det_q1 << "\n";
    return kExitOk;
  }
  nfl::io::save_manifest(out / "manifest.json", man);
  if (outcome.status == nfl::CertifyStatus::Infeasible) {
    std::cerr << "no certificate found (SDP infeasible); this does not prove instability\n";
    return kExitVerifyInfeasible;
  }
  std::cerr << "solver error: " << outcome.message << "\n";
  return kExitConfig;
}

int cmd_finetune(const CommonArgs& args) {
  json cfg = unwrap_manifest(load_config(args.config));
  const auto box = parse_box(cfg);
  if (args.controller.empty()) throw nfl::ConfigError("--controller is required for finetune");
  const auto nn = nfl::io::load_controller(args.controller);
  const fs::path data_dir =
      args.data_dir.empty() ? fs::path(cfg.at("data").value("dir", "data")) : fs::path(args.data_dir);
  const auto data = nfl::io::load_experiment(data_dir);

  const auto tic = std::chrono::steady_clock::now();
  const auto result = nfl::finetune(nn, data, box, parse_finetune(cfg, args.solver_tol));
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();

  const fs::path out(args.out_dir);
  fs::create_directories(out);
  nfl::io::save_controller(out / "controller_finetuned.json", result.nn_tuned);
  nfl::io::save_json(out / "finetune_result.json", nfl::io::finetune_result_to_json(result));
  if (result.certificate) nfl::io::save_certificate(out / "certificate.json", *result.certificate);

  nfl::io::RunManifest man;
  man.command = "finetune";
  man.config = cfg;
  man.config["already_stable"] = result.already_stable;
  add_digest(man, args.config);
  add_digest(man, args.controller);
  add_data_digests(man, data_dir);
  man.outputs.push_back((out / "controller_finetuned.json").string());
  man.outputs.push_back((out / "finetune_result.json").string());
  if (result.certificate) man.outputs.push_back((out / "certificate.json").string());
  man.timings_s["total"] = wall;
  nfl::io::save_manifest(out / "manifest.json", man);

  switch (result.status) {
    case nfl::FinetuneStatus::AlreadyStable:
      std::cout << "controller already certifies; returned unchanged\n";
      return kExitOk;
    case nfl::FinetuneStatus::Certified:
      std::cout << "fine-tuned and certified: |Nbar - N|_F = " << result.total_delta << " in "
                << result.outer_iters << " outer iterations\n";
      return kExitOk;
    case nfl::FinetuneStatus::SdpInfeasible:
      std::cerr << "stability SDP infeasible at iteration " << result.sdp_failure_iter << "\n";
      return kExitSynthesisInfeasible;
    default:
      std::cerr << "fine-tuning did not converge\n";
      return kExitNotConverged;
  }
}

int cmd_report(const CommonArgs& args) {
  json cfg = unwrap_manifest(load_config(args.config));
  if (!cfg.contains("report")) throw nfl::ConfigError("config has no report section");
  const auto& rep = cfg.at("report");
  const fs::path out(args.out_dir);
  fs::create_directories(out);
  bool produced = false;

  nfl::io::RunManifest man;
  man.command = "report";
  man.config = cfg;
  add_digest(man, args.config);

  if (rep.contains("certificate")) {
    const fs::path cert_path = rep.at("certificate").get<std::string>();
    const auto cert = nfl::io::load_certificate(cert_path);
    add_digest(man, cert_path);
    const auto roa = nfl::roa_from_certificate(cert);
    for (const auto& slice : rep.value("slices", json::array({json::array({0, 1})}))) {
      const nfl::Index di = slice.at(0).get<nfl::Index>();
      const nfl::Index dj = slice.at(1).get<nfl::Index>();
      const auto pts = nfl::roa_slice_boundary(roa, di, dj);
      const fs::path f =
          out / ("roa_" + std::to_string(di) + "_" + std::to_string(dj) + ".csv");
      nfl::io::save_roa_slice_csv(f, di, dj, pts);
      man.outputs.push_back(f.string());
      produced = true;
    }
  }

  if (rep.contains("trace")) {
    const fs::path tr = rep.at("trace").get<std::string>();
    add_digest(man, tr);
    std::ifstream in(tr);
    if (!in) throw nfl::ConfigError("cannot open trace: " + tr.string());
    std::ofstream outf(out / "loss_curve.csv");
    outf << "iter,pred_loss,log_det_q1,residual_norm\n";
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      std::istringstream row(line);
      std::string iter, loss, ld, rn;
      std::getline(row, iter, ',');
      std::getline(row, loss, ',');
      std::getline(row, ld, ',');
      std::getline(row, rn, ',');
      outf << iter << "," << loss << "," << ld << "," << rn << "\n";
    }
    man.outputs.push_back((out / "loss_curve.csv").string());
    produced = true;
  }

  if (rep.contains("rollouts")) {
    const auto plant = parse_plant(cfg);
    const auto box = parse_box(cfg);
    int idx = 0;
    for (const auto& ro : rep.at("rollouts")) {
      const fs::path cpath = ro.at("controller").get<std::string>();
      const auto nn = nfl::io::load_controller(cpath);
      add_digest(man, cpath);
      nfl::Vecd x0;
      if (ro.contains("x0")) {
        const auto v = ro.at("x0").get<std::vector<double>>();
        x0 = Eigen::Map<const nfl::Vecd>(v.data(), nfl::Index(v.size()));
      } else {
        std::mt19937_64 rng(ro.value("x0_seed", std::uint64_t(0)));
        x0 = box.sample(rng);
      }
      const auto steps = ro.value("steps", nfl::Index(500));
      const auto roll = nfl::simulate_closed_loop(plant, nn, x0, steps);
      const fs::path f = out / ("rollout_" + std::to_string(idx++) + ".csv");
      nfl::io::save_norm_series_csv(f, plant.dt, roll.norms);
      man.outputs.push_back(f.string());
      produced = true;
    }
  }

  if (!produced) throw nfl::ConfigError("report section lists no inputs");
  nfl::io::save_manifest(out / "manifest.json", man);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"data-driven neural feedback loop synthesis and certification"};
  app.set_version_flag("--version", nfl::kVersion);
  app.require_subcommand(1);

  CommonArgs args;
  auto add_common = [&](CLI::App* sub, bool with_controller) {
    sub->add_option("--config", args.config, "config file or preset name")->required();
    sub->add_option("--out-dir", args.out_dir, "output directory");
    sub->add_option("--seed", args.seed, "seed override");
    sub->add_option("--jobs", args.jobs, "parallel workers for seed sweeps");
    sub->add_option("--solver-tol", args.solver_tol, "SDP duality-gap tolerance");
    sub->add_option("--data", args.data_dir, "experiment data directory");
    if (with_controller)
      sub->add_option("--controller", args.controller, "controller JSON file");
  };

  auto* collect = app.add_subcommand("collect", "run an experiment and store the data");
  auto* train = app.add_subcommand("train", "synthesize a certified controller");
  auto* verify = app.add_subcommand("verify", "data-driven stability verification");
  auto* finetune = app.add_subcommand("finetune", "minimally adapt an existing controller");
  auto* report = app.add_subcommand("report", "emit plot-ready CSVs from run artifacts");
  add_common(collect, false);
  add_common(train, false);
  add_common(verify, true);
  add_common(finetune, true);
  add_common(report, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (collect->parsed()) return cmd_collect(args);
    if (train->parsed()) return cmd_train(args);
    if (verify->parsed()) return cmd_verify(args);
    if (finetune->parsed()) return cmd_finetune(args);
    if (report->parsed()) return cmd_report(args);
  } catch (const nfl::DataTooShort& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const nfl::NotPersistentlyExciting& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const nfl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
