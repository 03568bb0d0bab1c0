#include "nfl/io.hpp"

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "nfl/version.hpp"

namespace nfl::io {

namespace {

std::ofstream open_out(const path& file) {
  std::ofstream out(file);
  if (!out) throw ConfigError("cannot open for writing: " + file.string());
  out << std::setprecision(17);
  return out;
}

std::ifstream open_in(const path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open for reading: " + file.string());
  return in;
}

}  // namespace

void write_matrix_csv(const path& file, const Matd& m) {
  auto out = open_out(file);
  out << m.rows() << "," << m.cols() << "\n";
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
    out << "\n";
  }
}

Matd read_matrix_csv(const path& file) {
  auto in = open_in(file);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty csv: " + file.string());
  Index rows = 0, cols = 0;
  {
    std::istringstream hdr(line);
    char comma = 0;
    if (!(hdr >> rows >> comma >> cols) || comma != ',' || rows < 0 || cols < 0)
      throw ConfigError("malformed csv dimension header in " + file.string());
  }
  Matd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    if (!std::getline(in, line)) throw ConfigError("truncated csv: " + file.string());
    std::istringstream row(line);
    std::string cell;
    for (Index j = 0; j < cols; ++j) {
      if (!std::getline(row, cell, ',')) throw ConfigError("short csv row in " + file.string());
      m(i, j) = std::stod(cell);
    }
  }
  return m;
}

void save_experiment(const path& dir, const ExperimentData<double>& data, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  write_matrix_csv(dir / "u.csv", data.U0);
  write_matrix_csv(dir / "x0.csv", data.X0);
  write_matrix_csv(dir / "x1.csv", data.X1);
  json meta = {{"T", data.T()},
               {"n_x", data.nx()},
               {"n_u", data.nu()},
               {"seed", seed},
               {"pe_ok", data.pe_ok}};
  save_json(dir / "meta.json", meta);
}

ExperimentData<double> load_experiment(const path& dir) {
  ExperimentData<double> data;
  data.U0 = read_matrix_csv(dir / "u.csv");
  data.X0 = read_matrix_csv(dir / "x0.csv");
  data.X1 = read_matrix_csv(dir / "x1.csv");
  const json meta = load_json(dir / "meta.json");
  data.pe_ok = meta.at("pe_ok").get<bool>();
  data.validate();
  return data;
}

json matrix_to_json(const Matd& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matd matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw ConfigError("matrix json must be a non-empty array");
  const Index rows = Index(j.size());
  const Index cols = Index(j.at(0).size());
  Matd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    if (Index(j.at(i).size()) != cols) throw ConfigError("ragged matrix json");
    for (Index c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
  }
  return m;
}

json controller_to_json(const NnController<double>& nn) {
  json j;
  j["layer_sizes"] = nn.layer_sizes();
  j["activation"] = "tanh";
  json weights = json::array();
  for (const auto& w : nn.weights) {
    json flat = json::array();
    for (Index r = 0; r < w.rows(); ++r)
      for (Index c = 0; c < w.cols(); ++c) flat.push_back(w(r, c));
    weights.push_back(std::move(flat));
  }
  j["weights"] = weights;
  return j;
}

NnController<double> controller_from_json(const json& j) {
  if (j.value("activation", "tanh") != std::string("tanh"))
    throw ConfigError("only tanh controllers are supported");
  const auto sizes = j.at("layer_sizes").get<std::vector<Index>>();
  const auto& weights = j.at("weights");
  if (sizes.size() < 2 || weights.size() != sizes.size() - 1)
    throw ConfigError("layer_sizes and weights disagree");
  NnController<double> nn;
  for (size_t i = 0; i + 1 < sizes.size(); ++i) {
    const auto& flat = weights.at(i);
    if (Index(flat.size()) != sizes[i + 1] * sizes[i])
      throw ConfigError("weight array size mismatch at layer " + std::to_string(i + 1));
    Matd w(sizes[i + 1], sizes[i]);
    Index k = 0;
    for (Index r = 0; r < w.rows(); ++r)
      for (Index c = 0; c < w.cols(); ++c) w(r, c) = flat.at(k++).get<double>();
    nn.weights.push_back(std::move(w));
  }
  nn.validate();
  return nn;
}

void save_controller(const path& file, const NnController<double>& nn) {
  save_json(file, controller_to_json(nn));
}

NnController<double> load_controller(const path& file) {
  return controller_from_json(load_json(file));
}

json certificate_to_json(const StabilityCertificate& cert) {
  json j;
  j["Q1"] = matrix_to_json(cert.Q1);
  j["Q2_diag"] = std::vector<double>(cert.q2.data(), cert.q2.data() + cert.q2.size());
  j["L1"] = matrix_to_json(cert.L1);
  j["L2"] = matrix_to_json(cert.L2);
  j["L3"] = matrix_to_json(cert.L3);
  j["L4"] = matrix_to_json(cert.L4);
  j["eq_residual"] = cert.eq_residual;
  j["margin"] = cert.margin;
  j["margin_target"] = cert.margin_target;
  j["log_det_Q1"] = cert.log_det_q1;
  j["solver_status"] = cert.solver_status;
  auto vec = [](const Vecd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  j["sector_context"] = {{"nu_lo", vec(cert.sector.nu_lo)},
                         {"nu_hi", vec(cert.sector.nu_hi)},
                         {"alpha", vec(cert.sector.alpha)},
                         {"beta", vec(cert.sector.beta)}};
  j["transformed_interconnection"] = {{"pi_x", matrix_to_json(cert.nt.pi_x)},
                                      {"pi_z", matrix_to_json(cert.nt.pi_z)},
                                      {"nu_x", matrix_to_json(cert.nt.nu_x)},
                                      {"nu_z", matrix_to_json(cert.nt.nu_z)}};
  return j;
}

StabilityCertificate certificate_from_json(const json& j) {
  StabilityCertificate cert;
  cert.Q1 = matrix_from_json(j.at("Q1"));
  const auto q2 = j.at("Q2_diag").get<std::vector<double>>();
  cert.q2 = Eigen::Map<const Vecd>(q2.data(), Index(q2.size()));
  cert.L1 = matrix_from_json(j.at("L1"));
  cert.L2 = matrix_from_json(j.at("L2"));
  cert.L3 = matrix_from_json(j.at("L3"));
  cert.L4 = matrix_from_json(j.at("L4"));
  cert.eq_residual = j.at("eq_residual").get<double>();
  cert.margin = j.at("margin").get<double>();
  cert.margin_target = j.at("margin_target").get<double>();
  cert.log_det_q1 = j.at("log_det_Q1").get<double>();
  cert.solver_status = j.at("solver_status").get<std::string>();
  auto vec = [](const json& a) {
    const auto v = a.get<std::vector<double>>();
    return Vecd(Eigen::Map<const Vecd>(v.data(), Index(v.size())));
  };
  const auto& sc = j.at("sector_context");
  cert.sector.nu_lo = vec(sc.at("nu_lo"));
  cert.sector.nu_hi = vec(sc.at("nu_hi"));
  cert.sector.alpha = vec(sc.at("alpha"));
  cert.sector.beta = vec(sc.at("beta"));
  const auto& nt = j.at("transformed_interconnection");
  cert.nt.pi_x = matrix_from_json(nt.at("pi_x"));
  cert.nt.pi_z = matrix_from_json(nt.at("pi_z"));
  cert.nt.nu_x = matrix_from_json(nt.at("nu_x"));
  cert.nt.nu_z = matrix_from_json(nt.at("nu_z"));
  return cert;
}

void save_certificate(const path& file, const StabilityCertificate& cert) {
  save_json(file, certificate_to_json(cert));
}

StabilityCertificate load_certificate(const path& file) {
  return certificate_from_json(load_json(file));
}

void save_trace_csv(const path& file, const SynthesisTrace& trace) {
  auto out = open_out(file);
  out << "iter,pred_loss,log_det_q1,residual_norm,residual_sq,y_norm,sdp_status,wall_s\n";
  for (const auto& r : trace.iters)
    out << r.k << "," << r.pred_loss << "," << r.log_det_q1 << "," << r.residual_norm << ","
        << r.residual_sq << "," << r.y_norm << "," << r.sdp_status << "," << r.wall_s << "\n";
}

json finetune_result_to_json(const FinetuneResult& result) {
  json j;
  const char* status = nullptr;
  switch (result.status) {
    case FinetuneStatus::AlreadyStable: status = "already_stable"; break;
    case FinetuneStatus::Certified: status = "certified"; break;
    case FinetuneStatus::SdpInfeasible: status = "sdp_infeasible"; break;
    case FinetuneStatus::InnerLoopStalled: status = "inner_loop_stalled"; break;
    case FinetuneStatus::NotConverged: status = "not_converged"; break;
    default: status = "solver_error"; break;
  }
  j["status"] = status;
  j["already_stable"] = result.already_stable;
  j["total_delta"] = result.total_delta;
  j["outer_iters"] = result.outer_iters;
  json hist = json::array();
  for (const auto& rec : result.history) {
    hist.push_back({{"outer", rec.outer},
                    {"nf_norms", rec.nf_norms},
                    {"qp_objectives", rec.qp_objectives},
                    {"residual_sq", rec.residual_sq},
                    {"log_det_q1", rec.log_det_q1},
                    {"y_norm", rec.y_norm},
                    {"sdp_status", rec.sdp_status},
                    {"wall_s", rec.wall_s}});
  }
  j["history"] = hist;
  return j;
}

void save_roa_slice_csv(const path& file, Index di, Index dj, const Matd& points) {
  auto out = open_out(file);
  out << "dim_i,dim_j,xi,xj\n";
  for (Index k = 0; k < points.rows(); ++k)
    out << di << "," << dj << "," << points(k, 0) << "," << points(k, 1) << "\n";
}

void save_norm_series_csv(const path& file, double dt, const Vecd& norms) {
  auto out = open_out(file);
  out << "t,norm\n";
  for (Index k = 0; k < norms.size(); ++k) out << k * dt << "," << norms[k] << "\n";
}

// ---------------------------------------------------------------------------
// Compact SHA-256 (FIPS 180-4), enough for manifest digests.

namespace {

struct Sha256 {
  std::array<std::uint32_t, 8> h{0x6a09e667u, 0xbb67ae85u, 0x3c6ef372u, 0xa54ff53au,
                                 0x510e527fu, 0x9b05688cu, 0x1f83d9abu, 0x5be0cd19u};
  std::array<std::uint8_t, 64> block{};
  std::size_t block_len = 0;
  std::uint64_t total_len = 0;

  static std::uint32_t rotr(std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

  void process(const std::uint8_t* p) {
    static constexpr std::uint32_t k[64] = {
        0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4,
        0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe,
        0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f,
        0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7,
        0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
        0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
        0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116,
        0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
        0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7,
        0xc67178f2};
    std::uint32_t w[64];
    for (int i = 0; i < 16; ++i)
      w[i] = std::uint32_t(p[4 * i]) << 24 | std::uint32_t(p[4 * i + 1]) << 16 |
             std::uint32_t(p[4 * i + 2]) << 8 | std::uint32_t(p[4 * i + 3]);
    for (int i = 16; i < 64; ++i) {
      const std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
      const std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
      w[i] = w[i - 16] + s0 + w[i - 7] + s1;
    }
    auto a = h;
    for (int i = 0; i < 64; ++i) {
      const std::uint32_t s1 = rotr(a[4], 6) ^ rotr(a[4], 11) ^ rotr(a[4], 25);
      const std::uint32_t ch = (a[4] & a[5]) ^ (~a[4] & a[6]);
      const std::uint32_t t1 = a[7] + s1 + ch + k[i] + w[i];
      const std::uint32_t s0 = rotr(a[0], 2) ^ rotr(a[0], 13) ^ rotr(a[0], 22);
      const std::uint32_t maj = (a[0] & a[1]) ^ (a[0] & a[2]) ^ (a[1] & a[2]);
      const std::uint32_t t2 = s0 + maj;
      a[7] = a[6];
      a[6] = a[5];
      a[5] = a[4];
      a[4] = a[3] + t1;
      a[3] = a[2];
      a[2] = a[1];
      a[1] = a[0];
      a[0] = t1 + t2;
    }
    for (int i = 0; i < 8; ++i) h[i] += a[i];
  }

  void update(const void* data, std::size_t len) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    total_len += len;
    while (len > 0) {
      const std::size_t take = std::min(len, block.size() - block_len);
      std::memcpy(block.data() + block_len, p, take);
      block_len += take;
      p += take;
      len -= take;
      if (block_len == block.size()) {
        process(block.data());
        block_len = 0;
      }
    }
  }

  std::string hex_digest() {
    const std::uint64_t bits = total_len * 8;
    const std::uint8_t one = 0x80;
    update(&one, 1);
    const std::uint8_t zero = 0x00;
    while (block_len != 56) update(&zero, 1);
    std::uint8_t len_be[8];
    for (int i = 0; i < 8; ++i) len_be[i] = std::uint8_t(bits >> (56 - 8 * i));
    update(len_be, 8);
    std::ostringstream out;
    out << std::hex << std::setfill('0');
    for (const auto word : h) out << std::setw(8) << word;
    return out.str();
  }
};

}  // namespace

std::string sha256_bytes(const void* data, std::size_t len) {
  Sha256 s;
  s.update(data, len);
  return s.hex_digest();
}

std::string sha256_file(const path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot open for digest: " + file.string());
  Sha256 s;
  std::array<char, 65536> buf;
  while (in) {
    in.read(buf.data(), std::streamsize(buf.size()));
    s.update(buf.data(), std::size_t(in.gcount()));
  }
  return s.hex_digest();
}

json load_json(const path& file) {
  auto in = open_in(file);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("invalid json in " + file.string() + ": " + e.what());
  }
  return j;
}

void save_json(const path& file, const json& j) {
  auto out = open_out(file);
  out << j.dump(2) << "\n";
}

void save_manifest(const path& file, const RunManifest& manifest) {
  json j;
  j["command"] = manifest.command;
  j["version"] = manifest.version.empty() ? kVersion : manifest.version;
  j["config"] = manifest.config;
  j["inputs"] = manifest.inputs;
  j["outputs"] = manifest.outputs;
  j["timings_s"] = manifest.timings_s;
  save_json(file, j);
}

}  // namespace nfl::io
