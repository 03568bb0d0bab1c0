#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "nfl/certify.hpp"
#include "nfl/experiment.hpp"
#include "nfl/finetune.hpp"
#include "nfl/network.hpp"
#include "nfl/synthesis.hpp"
#include "nfl/types.hpp"

namespace nfl::io {

using nlohmann::json;
using std::filesystem::path;

/// CSV with a leading "rows,cols" dimension header, then one line per row.
void write_matrix_csv(const path& file, const Matd& m);
Matd read_matrix_csv(const path& file);

/// Experiment directory: u.csv / x0.csv / x1.csv (one column per sample) plus
/// the sidecar meta.json {T, n_x, n_u, seed, pe_ok}.
void save_experiment(const path& dir, const ExperimentData<double>& data, std::uint64_t seed);
ExperimentData<double> load_experiment(const path& dir);

json matrix_to_json(const Matd& m);
Matd matrix_from_json(const json& j);

/// Controller JSON: {layer_sizes, activation:"tanh", weights: row-major}.
json controller_to_json(const NnController<double>& nn);
NnController<double> controller_from_json(const json& j);
void save_controller(const path& file, const NnController<double>& nn);
NnController<double> load_controller(const path& file);

json certificate_to_json(const StabilityCertificate& cert);
StabilityCertificate certificate_from_json(const json& j);
void save_certificate(const path& file, const StabilityCertificate& cert);
StabilityCertificate load_certificate(const path& file);

void save_trace_csv(const path& file, const SynthesisTrace& trace);
json finetune_result_to_json(const FinetuneResult& result);

/// ROA slice boundary: header dim_i,dim_j,xi,xj; one row per boundary point.
void save_roa_slice_csv(const path& file, Index di, Index dj, const Matd& points);

/// Two-column time series t,norm sampled at dt.
void save_norm_series_csv(const path& file, double dt, const Vecd& norms);

std::string sha256_file(const path& file);
std::string sha256_bytes(const void* data, std::size_t len);

json load_json(const path& file);
void save_json(const path& file, const json& j);

/// Every command that writes outputs also writes exactly one of these; the
/// embedded config snapshot makes the run replayable.
struct RunManifest {
  std::string command;
  std::string version;
  json config;
  std::map<std::string, std::string> inputs;  // path -> sha256
  std::vector<std::string> outputs;
  std::map<std::string, double> timings_s;
};

void save_manifest(const path& file, const RunManifest& manifest);

}  // namespace nfl::io
