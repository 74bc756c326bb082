#pragma once

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "adaprox/datagen.hpp"
#include "adaprox/log.hpp"
#include "adaprox/problems.hpp"
#include "adaprox/prox.hpp"
#include "adaprox/schemes.hpp"
#include "adaprox/solver.hpp"
#include "adaprox/types.hpp"

// Experiment harness: turns an ExperimentSpec into seeded workloads, runs
// them (optionally across threads), and persists traces, summaries, scenes,
// and comparison tables. All on-disk numbers round-trip exactly: CSV doubles
// are printed with %.17g, JSON through the library's shortest-exact dump,
// and scene tensors as raw little-endian IEEE-754 doubles.

namespace adaprox {

enum class ProblemKind { Nmf, MixMf, MultiBand };

inline const char* problem_name(ProblemKind k) {
  switch (k) {
    case ProblemKind::Nmf: return "nmf";
    case ProblemKind::MixMf: return "mixmf";
    case ProblemKind::MultiBand: return "multiband";
  }
  return "?";
}

inline ProblemKind problem_from_name(const std::string& s) {
  if (s == "nmf") return ProblemKind::Nmf;
  if (s == "mixmf") return ProblemKind::MixMf;
  if (s == "multiband") return ProblemKind::MultiBand;
  throw std::invalid_argument("unknown problem '" + s +
                              "' (expected nmf|mixmf|multiband)");
}

enum class OutputFormat { Csv, Json };

inline const char* format_name(OutputFormat f) {
  return f == OutputFormat::Csv ? "csv" : "json";
}

inline OutputFormat format_from_name(const std::string& s) {
  if (s == "csv") return OutputFormat::Csv;
  if (s == "json") return OutputFormat::Json;
  throw std::invalid_argument("unknown format '" + s + "' (expected csv|json)");
}

// One experiment = one (problem, mode, scheme, alpha, ...) cell swept over
// seeds. Negative p / lambda_l0 / tol mean "use the problem's default".
struct ExperimentSpec {
  ProblemKind problem = ProblemKind::Nmf;
  SolveMode mode = SolveMode::AdaProx;
  Scheme scheme = Scheme::AmsGrad;
  double alpha = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double p = -1.0;
  double lambda_l0 = -1.0;
  double tol = -1.0;
  int max_iter = 1000;
  int max_subiter = 100;
  double alpha_s = 1e-5;  // component-block step for multiband runs
  std::vector<std::uint64_t> seeds{42};
  std::filesystem::path out_dir = "runs";
  OutputFormat format = OutputFormat::Csv;
  int jobs = 1;

  double resolved_p() const {
    if (p > 0.0) return p;
    return problem == ProblemKind::MultiBand ? 0.45 : 0.125;
  }

  double resolved_tol() const {
    if (tol > 0.0) return tol;
    return problem == ProblemKind::MultiBand ? 1e-3 : 1e-4;
  }

  void validate() const {
    if (seeds.empty()) throw std::invalid_argument("spec: seeds must be non-empty");
    if (!(alpha > 0.0)) throw std::invalid_argument("spec: alpha must be > 0");
    if (!(alpha_s > 0.0)) throw std::invalid_argument("spec: alpha_s must be > 0");
    if (max_iter < 1) throw std::invalid_argument("spec: max_iter must be >= 1");
    if (max_subiter < 1) throw std::invalid_argument("spec: max_subiter must be >= 1");
    if (jobs < 1) throw std::invalid_argument("spec: jobs must be >= 1");
    if (out_dir.empty()) throw std::invalid_argument("spec: out_dir must be set");
    const double rp = resolved_p();
    if (!(rp > 0.0) || rp > 0.5) {
      throw std::invalid_argument("spec: p must lie in (0, 0.5]");
    }
    SolverConfig probe;  // delegate scheme/beta checks
    probe.scheme_cfg.scheme = scheme;
    probe.scheme_cfg.beta1 = beta1;
    probe.scheme_cfg.beta2 = beta2;
    probe.scheme_cfg.eps = eps;
    probe.scheme_cfg.p = rp;
    probe.max_iter = max_iter;
    probe.tol_outer = resolved_tol();
    probe.tol_inner = resolved_tol();
    probe.max_subiter = max_subiter;
    probe.validate();
  }
};

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

inline double parse_double(const std::string& tok, const char* where) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (tok.empty() || end != begin + tok.size()) {
    throw std::runtime_error(std::string(where) + ": bad number '" + tok + "'");
  }
  return v;
}

inline std::uint64_t parse_u64(const std::string& tok, const char* where) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  const unsigned long long v = std::strtoull(begin, &end, 10);
  if (tok.empty() || end != begin + tok.size()) {
    throw std::runtime_error(std::string(where) + ": bad integer '" + tok + "'");
  }
  return v;
}

inline std::vector<std::string> split_csv_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::vector<std::vector<std::string>> read_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    rows.push_back(split_csv_line(std::move(line)));
    line.clear();
  }
  return rows;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Trace files

inline void write_trace_csv(const std::filesystem::path& path,
                            const RunTrace& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "iteration,loss";
  for (const auto& b : trace.block_names) out << ",subiters_" << b;
  for (const auto& b : trace.block_names) out << ",rel_change_" << b;
  out << ",elapsed_s\n";
  for (const auto& rec : trace.iterations) {
    out << rec.iteration << ',' << detail::fmt17(rec.loss);
    for (int s : rec.subiters) out << ',' << s;
    for (double r : rec.rel_change) out << ',' << detail::fmt17(r);
    out << ',' << detail::fmt17(rec.elapsed_s) << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

// Block names are recovered from the subiters_<name> columns. The CSV layout
// does not store meta or the convergence flag; those live in the summary (and
// in JSON traces).
inline RunTrace read_trace_csv(const std::filesystem::path& path) {
  const auto rows = detail::read_csv(path);
  if (rows.empty()) throw std::runtime_error(path.string() + ": empty trace");
  const auto& head = rows.front();
  if (head.size() < 3 || head[0] != "iteration" || head[1] != "loss" ||
      head.back() != "elapsed_s" || (head.size() - 3) % 2 != 0) {
    throw std::runtime_error(path.string() + ": unrecognized trace header");
  }
  const std::size_t n_blocks = (head.size() - 3) / 2;
  RunTrace trace;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    const std::string& col = head[2 + b];
    if (col.rfind("subiters_", 0) != 0) {
      throw std::runtime_error(path.string() + ": expected subiters_* column, got '" + col + "'");
    }
    trace.block_names.push_back(col.substr(9));
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& cols = rows[i];
    if (cols.size() != head.size()) {
      throw std::runtime_error(path.string() + ": ragged trace row");
    }
    IterationRecord rec;
    rec.iteration = int(detail::parse_u64(cols[0], "trace iteration"));
    rec.loss = detail::parse_double(cols[1], "trace loss");
    for (std::size_t b = 0; b < n_blocks; ++b) {
      rec.subiters.push_back(int(detail::parse_u64(cols[2 + b], "trace subiters")));
    }
    for (std::size_t b = 0; b < n_blocks; ++b) {
      rec.rel_change.push_back(
          detail::parse_double(cols[2 + n_blocks + b], "trace rel_change"));
    }
    rec.elapsed_s = detail::parse_double(cols.back(), "trace elapsed_s");
    trace.iterations.push_back(std::move(rec));
  }
  return trace;
}

namespace detail {

inline double json_double(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN()
                     : j.get<double>();
}

inline nlohmann::json meta_to_json(const RunMeta& m) {
  return {{"problem", m.problem}, {"mode", m.mode},   {"scheme", m.scheme},
          {"alpha", m.alpha},     {"beta1", m.beta1}, {"beta2", m.beta2},
          {"eps", m.eps},         {"p", m.p},         {"seed", m.seed}};
}

inline RunMeta meta_from_json(const nlohmann::json& j) {
  RunMeta m;
  m.problem = j.at("problem").get<std::string>();
  m.mode = j.at("mode").get<std::string>();
  m.scheme = j.at("scheme").get<std::string>();
  m.alpha = json_double(j.at("alpha"));
  m.beta1 = json_double(j.at("beta1"));
  m.beta2 = json_double(j.at("beta2"));
  m.eps = json_double(j.at("eps"));
  m.p = json_double(j.at("p"));
  m.seed = j.at("seed").get<std::uint64_t>();
  return m;
}

}  // namespace detail

inline void write_trace_json(const std::filesystem::path& path,
                             const RunTrace& trace) {
  nlohmann::json j;
  j["meta"] = detail::meta_to_json(trace.meta);
  j["flag"] = flag_name(trace.flag);
  j["blocks"] = trace.block_names;
  auto& iters = j["iterations"] = nlohmann::json::array();
  for (const auto& rec : trace.iterations) {
    iters.push_back({{"iteration", rec.iteration},
                     {"loss", rec.loss},
                     {"subiters", rec.subiters},
                     {"rel_change", rec.rel_change},
                     {"elapsed_s", rec.elapsed_s}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline RunTrace read_trace_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  RunTrace trace;
  trace.meta = detail::meta_from_json(j.at("meta"));
  trace.flag = j.at("flag").get<std::string>() == "converged"
                   ? ConvergenceFlag::Converged
                   : ConvergenceFlag::MaxIterReached;
  trace.block_names = j.at("blocks").get<std::vector<std::string>>();
  for (const auto& ji : j.at("iterations")) {
    IterationRecord rec;
    rec.iteration = ji.at("iteration").get<int>();
    rec.loss = detail::json_double(ji.at("loss"));
    rec.subiters = ji.at("subiters").get<std::vector<int>>();
    for (const auto& r : ji.at("rel_change")) {
      rec.rel_change.push_back(detail::json_double(r));
    }
    rec.elapsed_s = detail::json_double(ji.at("elapsed_s"));
    trace.iterations.push_back(std::move(rec));
  }
  return trace;
}

inline RunTrace read_trace(const std::filesystem::path& path) {
  return path.extension() == ".json" ? read_trace_json(path)
                                     : read_trace_csv(path);
}

// ---------------------------------------------------------------------------
// Summary rows

struct RunSummary {
  std::string problem;
  std::string mode;
  std::string scheme;  // "-" for pgm rows
  double alpha = 0.0;
  std::uint64_t seed = 0;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  std::vector<std::string> block_names;
  std::vector<double> mean_subiters;  // per block, averaged over iterations
  double runtime_s = 0.0;             // wall clock of the solve call only
  std::string flag;                   // converged | max_iter | failed
  std::string trace_file;             // basename, relative to the summary
};

inline void write_summary_csv(const std::filesystem::path& path,
                              const std::vector<RunSummary>& rows) {
  if (rows.empty()) throw std::invalid_argument("write_summary: no rows");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "problem,mode,scheme,alpha,seed,final_loss,iterations";
  for (const auto& b : rows.front().block_names) out << ",subiters_" << b;
  out << ",runtime_s,flag,trace_file\n";
  for (const auto& r : rows) {
    if (r.block_names != rows.front().block_names) {
      throw std::invalid_argument("write_summary: rows disagree on blocks");
    }
    out << r.problem << ',' << r.mode << ',' << r.scheme << ','
        << detail::fmt17(r.alpha) << ',' << r.seed << ','
        << detail::fmt17(r.final_loss) << ',' << r.iterations;
    for (double s : r.mean_subiters) out << ',' << detail::fmt17(s);
    out << ',' << detail::fmt17(r.runtime_s) << ',' << r.flag << ','
        << r.trace_file << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline void write_summary_json(const std::filesystem::path& path,
                               const std::vector<RunSummary>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"problem", r.problem},
                   {"mode", r.mode},
                   {"scheme", r.scheme},
                   {"alpha", r.alpha},
                   {"seed", r.seed},
                   {"final_loss", r.final_loss},
                   {"iterations", r.iterations},
                   {"blocks", r.block_names},
                   {"mean_subiters", r.mean_subiters},
                   {"runtime_s", r.runtime_s},
                   {"flag", r.flag},
                   {"trace_file", r.trace_file}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << arr.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline void write_summary(const std::filesystem::path& path,
                          const std::vector<RunSummary>& rows,
                          OutputFormat format) {
  if (format == OutputFormat::Csv) {
    write_summary_csv(path, rows);
  } else {
    write_summary_json(path, rows);
  }
}

inline std::vector<RunSummary> read_summary(
    const std::filesystem::path& path) {
  std::vector<RunSummary> rows;
  if (path.extension() == ".json") {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    nlohmann::json arr;
    try {
      in >> arr;
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path.string() + ": " + e.what());
    }
    for (const auto& j : arr) {
      RunSummary r;
      r.problem = j.at("problem").get<std::string>();
      r.mode = j.at("mode").get<std::string>();
      r.scheme = j.at("scheme").get<std::string>();
      r.alpha = detail::json_double(j.at("alpha"));
      r.seed = j.at("seed").get<std::uint64_t>();
      r.final_loss = detail::json_double(j.at("final_loss"));
      r.iterations = j.at("iterations").get<int>();
      r.block_names = j.at("blocks").get<std::vector<std::string>>();
      for (const auto& s : j.at("mean_subiters")) {
        r.mean_subiters.push_back(detail::json_double(s));
      }
      r.runtime_s = detail::json_double(j.at("runtime_s"));
      r.flag = j.at("flag").get<std::string>();
      r.trace_file = j.at("trace_file").get<std::string>();
      rows.push_back(std::move(r));
    }
    return rows;
  }

  const auto table = detail::read_csv(path);
  if (table.empty()) throw std::runtime_error(path.string() + ": empty summary");
  const auto& head = table.front();
  auto col = [&](const char* name) {
    for (std::size_t i = 0; i < head.size(); ++i) {
      if (head[i] == name) return i;
    }
    throw std::runtime_error(path.string() + ": missing column '" +
                             std::string(name) + "'");
  };
  std::vector<std::pair<std::size_t, std::string>> subiter_cols;
  for (std::size_t i = 0; i < head.size(); ++i) {
    if (head[i].rfind("subiters_", 0) == 0) {
      subiter_cols.emplace_back(i, head[i].substr(9));
    }
  }
  const std::size_t c_problem = col("problem"), c_mode = col("mode"),
                    c_scheme = col("scheme"), c_alpha = col("alpha"),
                    c_seed = col("seed"), c_loss = col("final_loss"),
                    c_iters = col("iterations"), c_rt = col("runtime_s"),
                    c_flag = col("flag"), c_trace = col("trace_file");
  for (std::size_t i = 1; i < table.size(); ++i) {
    const auto& cols = table[i];
    if (cols.size() != head.size()) {
      throw std::runtime_error(path.string() + ": ragged summary row");
    }
    RunSummary r;
    r.problem = cols[c_problem];
    r.mode = cols[c_mode];
    r.scheme = cols[c_scheme];
    r.alpha = detail::parse_double(cols[c_alpha], "summary alpha");
    r.seed = detail::parse_u64(cols[c_seed], "summary seed");
    r.final_loss = detail::parse_double(cols[c_loss], "summary final_loss");
    r.iterations = int(detail::parse_u64(cols[c_iters], "summary iterations"));
    for (const auto& [ci, name] : subiter_cols) {
      r.block_names.push_back(name);
      r.mean_subiters.push_back(
          detail::parse_double(cols[ci], "summary subiters"));
    }
    r.runtime_s = detail::parse_double(cols[c_rt], "summary runtime_s");
    r.flag = cols[c_flag];
    r.trace_file = cols[c_trace];
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Scene container: 8-byte magic, u64-LE header length, JSON header (shapes +
// metadata, including the generator seed), then each tensor's doubles
// row-major as little-endian IEEE-754.

inline constexpr char kSceneMagic[8] = {'A', 'P', 'X', 'S', 'C', 'N', '1', '\n'};

namespace detail {

inline void put_u64_le(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf += char((v >> (8 * i)) & 0xff);
}

inline std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
  return v;
}

inline void put_matrix(std::string& buf, const Matrix& m) {
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      put_u64_le(buf, std::bit_cast<std::uint64_t>(m(r, c)));
    }
  }
}

struct SceneFile {
  nlohmann::json header;
  std::vector<std::pair<std::string, Matrix>> tensors;
};

inline void write_scene_file(const std::filesystem::path& path,
                             nlohmann::json header,
                             const std::vector<std::pair<std::string, const Matrix*>>& tensors) {
  auto& tlist = header["tensors"] = nlohmann::json::array();
  for (const auto& [name, m] : tensors) {
    tlist.push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}});
  }
  const std::string head = header.dump();
  std::string buf;
  buf.append(kSceneMagic, sizeof(kSceneMagic));
  put_u64_le(buf, head.size());
  buf += head;
  for (const auto& [name, m] : tensors) put_matrix(buf, *m);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(buf.data(), std::streamsize(buf.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline SceneFile read_scene_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("scene load: cannot open " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  const auto* bytes = reinterpret_cast<const unsigned char*>(buf.data());
  if (buf.size() < 16 ||
      std::string_view(buf.data(), 8) != std::string_view(kSceneMagic, 8)) {
    throw std::runtime_error("scene load: " + path.string() +
                             " is not a scene file (bad magic)");
  }
  const std::uint64_t head_len = get_u64_le(bytes + 8);
  if (16 + head_len > buf.size()) {
    throw std::runtime_error("scene load: header claims " +
                             std::to_string(head_len) +
                             " bytes but the file holds " +
                             std::to_string(buf.size() - 16));
  }
  SceneFile file;
  try {
    file.header = nlohmann::json::parse(buf.substr(16, head_len));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("scene load: bad header JSON: " +
                             std::string(e.what()));
  }
  if (!file.header.contains("tensors")) {
    throw std::runtime_error("scene load: missing field 'tensors'");
  }
  std::size_t offset = 16 + std::size_t(head_len);
  std::uint64_t need = 0;
  for (const auto& t : file.header.at("tensors")) {
    need += t.at("rows").get<std::uint64_t>() * t.at("cols").get<std::uint64_t>();
  }
  const std::uint64_t have = (buf.size() - offset) / 8;
  if (need * 8 != buf.size() - offset) {
    throw std::runtime_error(
        "scene load: payload length mismatch: header needs " +
        std::to_string(need * 8) + " bytes (" + std::to_string(need) +
        " doubles), file holds " + std::to_string(buf.size() - offset) +
        " bytes (" + std::to_string(have) + " doubles)");
  }
  for (const auto& t : file.header.at("tensors")) {
    const Index rows = t.at("rows").get<Index>();
    const Index cols = t.at("cols").get<Index>();
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r) {
      for (Index c = 0; c < cols; ++c) {
        m(r, c) = std::bit_cast<double>(get_u64_le(bytes + offset));
        offset += 8;
      }
    }
    file.tensors.emplace_back(t.at("name").get<std::string>(), std::move(m));
  }
  return file;
}

inline const Matrix& find_tensor(const SceneFile& file, const char* name) {
  for (const auto& [n, m] : file.tensors) {
    if (n == name) return m;
  }
  throw std::runtime_error("scene load: missing tensor '" + std::string(name) + "'");
}

}  // namespace detail

inline void save_scene(const std::filesystem::path& path, const NmfScene& scene,
                       const std::string& label = "nmf") {
  nlohmann::json header{{"format", "adaprox-scene"},
                        {"version", 1},
                        {"dtype", "float64-le"},
                        {"problem", label},
                        {"seed", scene.seed},
                        {"metadata", {{"noise_sigma", scene.noise_sigma}}}};
  detail::write_scene_file(path, std::move(header),
                           {{"s_true", &scene.s_true},
                            {"a_true", &scene.a_true},
                            {"y", &scene.y}});
}

inline void save_scene(const std::filesystem::path& path,
                       const AstroScene& scene) {
  nlohmann::json sources = nlohmann::json::array();
  for (const auto& s : scene.sources) {
    std::vector<double> sed(s.sed.data(), s.sed.data() + s.sed.size());
    sources.push_back({{"cx", s.cx},
                       {"cy", s.cy},
                       {"sigma", s.sigma},
                       {"flux", s.flux},
                       {"sed", sed}});
  }
  std::vector<double> band_sigma(scene.band_sigma.data(),
                                 scene.band_sigma.data() + scene.band_sigma.size());
  nlohmann::json header{{"format", "adaprox-scene"},
                        {"version", 1},
                        {"dtype", "float64-le"},
                        {"problem", "multiband"},
                        {"seed", scene.seed},
                        {"metadata",
                         {{"height", scene.height},
                          {"width", scene.width},
                          {"band_sigma", band_sigma},
                          {"sources", sources}}}};
  detail::write_scene_file(path, std::move(header),
                           {{"s_true", &scene.s_true},
                            {"a_true", &scene.a_true},
                            {"y", &scene.y}});
}

using SceneVariant = std::variant<NmfScene, AstroScene>;

inline SceneVariant load_scene(const std::filesystem::path& path) {
  const auto file = detail::read_scene_file(path);
  for (const char* field : {"problem", "seed", "metadata"}) {
    if (!file.header.contains(field)) {
      throw std::runtime_error("scene load: missing field '" +
                               std::string(field) + "'");
    }
  }
  const std::string problem = file.header.at("problem").get<std::string>();
  const auto& meta = file.header.at("metadata");
  if (problem == "nmf" || problem == "mixmf") {
    NmfScene scene;
    scene.seed = file.header.at("seed").get<std::uint64_t>();
    scene.noise_sigma = detail::json_double(meta.at("noise_sigma"));
    scene.s_true = detail::find_tensor(file, "s_true");
    scene.a_true = detail::find_tensor(file, "a_true");
    scene.y = detail::find_tensor(file, "y");
    return scene;
  }
  if (problem == "multiband") {
    AstroScene scene;
    scene.seed = file.header.at("seed").get<std::uint64_t>();
    scene.height = meta.at("height").get<Index>();
    scene.width = meta.at("width").get<Index>();
    const auto bs = meta.at("band_sigma").get<std::vector<double>>();
    scene.band_sigma = Eigen::Map<const Vector>(bs.data(), Index(bs.size()));
    for (const auto& js : meta.at("sources")) {
      AstroSource src;
      src.cx = detail::json_double(js.at("cx"));
      src.cy = detail::json_double(js.at("cy"));
      src.sigma = detail::json_double(js.at("sigma"));
      src.flux = detail::json_double(js.at("flux"));
      const auto sed = js.at("sed").get<std::vector<double>>();
      src.sed = Eigen::Map<const Vector>(sed.data(), Index(sed.size()));
      scene.sources.push_back(std::move(src));
    }
    scene.s_true = detail::find_tensor(file, "s_true");
    scene.a_true = detail::find_tensor(file, "a_true");
    scene.y = detail::find_tensor(file, "y");
    return scene;
  }
  throw std::runtime_error("scene load: unknown problem '" + problem + "'");
}

// ---------------------------------------------------------------------------
// Workload assembly

struct Workload {
  std::unique_ptr<Problem> problem;
  std::vector<ParameterBlock> blocks;
  SolverConfig solver;
  RunMeta meta;
};

inline SolverConfig solver_config_for(const ExperimentSpec& spec) {
  SolverConfig cfg;
  cfg.scheme_cfg.scheme = spec.scheme;
  cfg.scheme_cfg.beta1 = spec.beta1;
  cfg.scheme_cfg.beta2 = spec.beta2;
  cfg.scheme_cfg.eps = spec.eps;
  cfg.scheme_cfg.p = spec.resolved_p();
  cfg.max_iter = spec.max_iter;
  cfg.tol_outer = spec.resolved_tol();
  cfg.tol_inner = spec.resolved_tol();
  cfg.max_subiter = spec.max_subiter;
  return cfg;
}

inline RunMeta run_meta_for(const ExperimentSpec& spec, std::uint64_t seed) {
  RunMeta meta;
  meta.problem = problem_name(spec.problem);
  meta.mode = mode_name(spec.mode);
  meta.scheme =
      spec.mode == SolveMode::Pgm ? "-" : scheme_name(spec.scheme);
  meta.alpha = spec.alpha;
  meta.beta1 = spec.beta1;
  meta.beta2 = spec.beta2;
  meta.eps = spec.eps;
  meta.p = spec.resolved_p();
  meta.seed = seed;
  return meta;
}

// Scene + init + blocks + solver config for one seed. The factorization
// problems share the block layout [A, S]; constraints differ only in the
// prox chains: nmf keeps both factors non-negative, mixmf puts A's rows on
// the simplex, and the multiband runs threshold/normalize the component maps
// while A stays non-negative with per-component amplitude-relative steps.
inline Workload make_workload(const ExperimentSpec& spec, std::uint64_t seed) {
  Workload wl;
  wl.solver = solver_config_for(spec);
  wl.meta = run_meta_for(spec, seed);

  if (spec.problem == ProblemKind::Nmf || spec.problem == ProblemKind::MixMf) {
    const NmfSceneParams params;
    NmfScene scene = make_nmf_scene(seed, params);
    NmfInit init = init_nmf(seed, params.observations, params.components,
                            params.samples);
    StepSchedule step;
    step.alpha = spec.alpha;

    ParameterBlock a;
    a.name = "A";
    a.values = std::move(init.a0);
    a.step_schedule = step;
    a.prox = spec.problem == ProblemKind::MixMf
                 ? ProxChain{ProxOperator::unity_rows()}
                 : ProxChain{ProxOperator::nonneg()};

    ParameterBlock s;
    s.name = "S";
    s.values = std::move(init.s0);
    s.step_schedule = step;
    s.prox = ProxChain{ProxOperator::nonneg()};

    wl.problem = std::make_unique<NmfProblem>(std::move(scene.y),
                                              params.components);
    wl.blocks.push_back(std::move(a));
    wl.blocks.push_back(std::move(s));
    return wl;
  }

  const AstroSceneParams params;
  AstroScene scene = make_astro_scene(seed, params);
  AstroInit init = init_astro(scene, seed);
  AstroStepSizes steps = astro_step_sizes(init.a0, spec.alpha, spec.alpha_s);
  const double lambda = spec.lambda_l0 > 0.0
                            ? spec.lambda_l0
                            : 1e-4 * init.s0.maxCoeff();

  ParameterBlock a;
  a.name = "A";
  a.values = std::move(init.a0);
  a.step_schedule = std::move(steps.a);
  a.prox = ProxChain{ProxOperator::nonneg()};

  ParameterBlock s;
  s.name = "S";
  s.values = std::move(init.s0);
  s.step_schedule = std::move(steps.s);
  s.prox = ProxChain{ProxOperator::hard_threshold(lambda),
                     ProxOperator::nonneg(), ProxOperator::unity_rows()};

  wl.problem = std::make_unique<MultiBandProblem>(
      std::move(scene.y), scene.band_sigma, params.sources, params.height,
      params.width);
  wl.blocks.push_back(std::move(a));
  wl.blocks.push_back(std::move(s));
  return wl;
}

// ---------------------------------------------------------------------------
// Experiment driver

inline std::string experiment_tag(const ExperimentSpec& spec) {
  std::string tag = problem_name(spec.problem);
  tag += '_';
  tag += mode_name(spec.mode);
  if (spec.mode == SolveMode::AdaProx) {
    tag += '-';
    tag += scheme_name(spec.scheme);
  }
  tag += "_a" + detail::fmt_short(spec.alpha);
  return tag;
}

inline std::string run_tag(const ExperimentSpec& spec, std::uint64_t seed) {
  return experiment_tag(spec) + "_s" + std::to_string(seed);
}

struct ExperimentResult {
  std::vector<RunSummary> summaries;
  std::vector<std::filesystem::path> trace_paths;
  std::filesystem::path summary_path;
  bool all_completed = true;  // no numerical failures (max_iter still counts)
};

// Runs every seed, writes one trace file per run plus one summary file named
// after the experiment tag (reruns overwrite, keeping outputs reproducible).
// Seeds are distributed over `jobs` threads; outputs are ordered by seed
// index regardless of scheduling.
inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  namespace fs = std::filesystem;
  fs::create_directories(spec.out_dir);

  const std::size_t n = spec.seeds.size();
  std::vector<RunSummary> summaries(n);
  std::vector<fs::path> trace_paths(n);
  std::vector<std::string> failures(n);
  std::atomic<std::size_t> next{0};

  auto worker = [&]() {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      const std::uint64_t seed = spec.seeds[i];
      RunTrace trace;
      std::string flag;
      double runtime = 0.0;
      try {
        Workload wl = make_workload(spec, seed);
        const auto t0 = std::chrono::steady_clock::now();
        trace = solve(*wl.problem, wl.blocks, wl.solver, spec.mode, wl.meta);
        runtime = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
        flag = flag_name(trace.flag);
      } catch (const NumericalFailure& e) {
        trace = e.trace;
        trace.meta = run_meta_for(spec, seed);
        flag = "failed";
        failures[i] = e.what();
        warn("run seed " + std::to_string(seed) + " failed: " + e.what());
      }

      const std::string base = run_tag(spec, seed);
      const fs::path trace_path =
          spec.out_dir / (base + (spec.format == OutputFormat::Csv
                                      ? ".trace.csv"
                                      : ".trace.json"));
      if (trace.block_names.empty()) {
        // failure before the first record: name blocks so the header exists
        trace.block_names = {"A", "S"};
      }
      if (spec.format == OutputFormat::Csv) {
        write_trace_csv(trace_path, trace);
      } else {
        write_trace_json(trace_path, trace);
      }
      trace_paths[i] = trace_path;

      RunSummary& row = summaries[i];
      row.problem = trace.meta.problem;
      row.mode = trace.meta.mode;
      row.scheme = trace.meta.scheme;
      row.alpha = spec.alpha;
      row.seed = seed;
      row.final_loss = trace.final_loss();
      row.iterations = int(trace.iterations.size());
      row.block_names = trace.block_names;
      row.mean_subiters.assign(trace.block_names.size(), 0.0);
      for (const auto& rec : trace.iterations) {
        for (std::size_t b = 0; b < rec.subiters.size(); ++b) {
          row.mean_subiters[b] += rec.subiters[b];
        }
      }
      if (!trace.iterations.empty()) {
        for (double& s : row.mean_subiters) {
          s /= double(trace.iterations.size());
        }
      }
      row.runtime_s = runtime;
      row.flag = flag;
      row.trace_file = trace_path.filename().string();
    }
  };

  const std::size_t n_threads = std::min<std::size_t>(std::size_t(spec.jobs), n);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  ExperimentResult result;
  result.summaries = std::move(summaries);
  result.trace_paths = std::move(trace_paths);
  result.summary_path =
      spec.out_dir / ("summary_" + experiment_tag(spec) + "." +
                      format_name(spec.format));
  write_summary(result.summary_path, result.summaries, spec.format);
  for (const auto& f : failures) {
    if (!f.empty()) {
      result.all_completed = false;
      break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Comparison tables and loss curves

struct ComparisonResult {
  std::filesystem::path table_path;
  std::vector<std::filesystem::path> curve_paths;
};

// Merges summary rows into one table sorted by (problem, alpha, scheme) and
// writes per-run iteration/loss curves next to the table. trace_file entries
// are resolved relative to in_dir; a missing trace loses its curve with a
// warning rather than failing the whole table.
inline ComparisonResult emit_comparison(std::vector<RunSummary> rows,
                                        const std::filesystem::path& in_dir,
                                        const std::filesystem::path& out_path) {
  if (rows.empty()) {
    throw std::invalid_argument("emit_comparison: need at least one summary row");
  }
  std::sort(rows.begin(), rows.end(),
            [](const RunSummary& a, const RunSummary& b) {
              return std::tie(a.problem, a.alpha, a.scheme, a.mode, a.seed) <
                     std::tie(b.problem, b.alpha, b.scheme, b.mode, b.seed);
            });
  ComparisonResult result;
  result.table_path = out_path;
  const OutputFormat fmt = out_path.extension() == ".json" ? OutputFormat::Json
                                                           : OutputFormat::Csv;
  if (!out_path.parent_path().empty()) {
    std::filesystem::create_directories(out_path.parent_path());
  }
  write_summary(out_path, rows, fmt);

  const std::filesystem::path curve_dir =
      out_path.parent_path().empty() ? "." : out_path.parent_path();
  for (const auto& row : rows) {
    if (row.trace_file.empty()) continue;
    const std::filesystem::path trace_path = in_dir / row.trace_file;
    RunTrace trace;
    try {
      trace = read_trace(trace_path);
    } catch (const std::exception& e) {
      warn(std::string("emit_comparison: skipping curve: ") + e.what());
      continue;
    }
    std::string stem = trace_path.filename().string();
    if (auto pos = stem.find(".trace."); pos != std::string::npos) {
      stem.resize(pos);
    }
    const std::filesystem::path curve_path = curve_dir / (stem + ".curve.csv");
    std::ofstream out(curve_path);
    if (!out) throw std::runtime_error("cannot write " + curve_path.string());
    out << "iteration,loss\n";
    for (const auto& rec : trace.iterations) {
      out << rec.iteration << ',' << detail::fmt17(rec.loss) << '\n';
    }
    result.curve_paths.push_back(curve_path);
  }
  return result;
}

}  // namespace adaprox
