#include "safehc/pipeline.hpp"

#include "safehc/oracle.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace safehc {
namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << bytes;
}

std::string hex64(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---- config schema helpers ----

std::string join(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

void allow_only(const json& obj, const std::string& section, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw ConfigError(section, "expected an object");
  for (const auto& [k, v] : obj.items()) {
    bool known = false;
    for (const char* a : keys) known = known || k == a;
    if (!known) throw ConfigError(join(section, k), "unknown field");
  }
}

double number(const json& obj, const std::string& section, const char* key, std::optional<double> def) {
  const std::string field = join(section, key);
  if (!obj.contains(key)) {
    if (def) return *def;
    throw ConfigError(field, "required field is missing");
  }
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(field, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(field, "must be finite");
  return x;
}

double positive(const json& obj, const std::string& section, const char* key, std::optional<double> def) {
  const double x = number(obj, section, key, def);
  if (!(x > 0.0)) throw ConfigError(join(section, key), "must be positive");
  return x;
}

int integer(const json& obj, const std::string& section, const char* key, int def, int lo) {
  const std::string field = join(section, key);
  if (!obj.contains(key)) return def;
  const auto& v = obj.at(key);
  if (!v.is_number_integer()) throw ConfigError(field, "expected an integer");
  const int x = v.get<int>();
  if (x < lo) throw ConfigError(field, "must be at least " + std::to_string(lo));
  return x;
}

std::string text(const json& obj, const std::string& section, const char* key,
                 std::optional<std::string> def) {
  const std::string field = join(section, key);
  if (!obj.contains(key)) {
    if (def) return *def;
    throw ConfigError(field, "required field is missing");
  }
  if (!obj.at(key).is_string()) throw ConfigError(field, "expected a string");
  return obj.at(key).get<std::string>();
}

const json& section_of(const json& doc, const char* name) {
  static const json empty = json::object();
  if (!doc.contains(name)) return empty;
  return doc.at(name);
}

MaterialLibrary parse_library(const json& doc, const fs::path& base) {
  const json& sec = section_of(doc, "material_library");
  allow_only(sec, "material_library", {"builtin", "file", "materials"});
  MaterialLibrary lib;
  if (sec.contains("builtin") && !sec.at("builtin").is_boolean())
    throw ConfigError("material_library.builtin", "expected a boolean");
  if (sec.value("builtin", true)) lib = MaterialLibrary::builtin();
  auto merge = [&](const std::string& payload, const std::string& field) {
    try {
      const MaterialLibrary extra = MaterialLibrary::from_json_text(payload);
      for (const auto& n : extra.names()) lib.add(extra.at(n));
    } catch (const std::exception& e) {
      throw ConfigError(field, e.what());
    }
  };
  if (sec.contains("file")) {
    const fs::path p = base / text(sec, "material_library", "file", std::nullopt);
    std::string payload;
    try {
      payload = read_file(p);
    } catch (const std::exception& e) {
      throw ConfigError("material_library.file", e.what());
    }
    merge(payload, "material_library.file");
  }
  if (sec.contains("materials")) merge(sec.at("materials").dump(), "material_library.materials");
  return lib;
}

LaminateSpec parse_laminate(const json& sec, int& elems_per_ply, int& order) {
  const std::string s = "laminate";
  allow_only(sec, s, {"plies", "material", "angles", "ply_thickness", "propagation_angle",
                      "elems_per_ply", "order"});
  LaminateSpec spec;
  spec.propagation_angle_deg = number(sec, s, "propagation_angle", 0.0);
  elems_per_ply = integer(sec, s, "elems_per_ply", 2, 1);
  order = integer(sec, s, "order", 5, 1);
  if (sec.contains("plies")) {
    if (sec.contains("angles") || sec.contains("material"))
      throw ConfigError("laminate.plies", "give either plies or material + angles");
    const auto& plies = sec.at("plies");
    if (!plies.is_array() || plies.empty()) throw ConfigError("laminate.plies", "expected a non-empty array");
    for (std::size_t i = 0; i < plies.size(); ++i) {
      const std::string ps = "laminate.plies[" + std::to_string(i) + "]";
      allow_only(plies[i], ps, {"material", "angle", "thickness"});
      spec.plies.push_back({text(plies[i], ps, "material", std::nullopt), number(plies[i], ps, "angle", 0.0),
                            positive(plies[i], ps, "thickness", std::nullopt)});
    }
  } else {
    const std::string mat = text(sec, s, "material", std::nullopt);
    const double t = positive(sec, s, "ply_thickness", std::nullopt);
    if (!sec.contains("angles") || !sec.at("angles").is_array() || sec.at("angles").empty())
      throw ConfigError("laminate.angles", "expected a non-empty array of ply angles");
    for (const auto& a : sec.at("angles")) {
      if (!a.is_number()) throw ConfigError("laminate.angles", "expected numbers");
      spec.plies.push_back({mat, a.get<double>(), t});
    }
  }
  return spec;
}

Mesh parse_mesh(const json& sec, const fs::path& base) {
  if (!sec.is_object()) throw ConfigError("mesh", "expected an object");
  try {
    if (sec.contains("file")) {
      allow_only(sec, "mesh", {"file"});
      const fs::path p = base / text(sec, "mesh", "file", std::nullopt);
      std::string payload;
      try {
        payload = read_file(p);
      } catch (const std::exception& e) {
        throw ConfigError("mesh.file", e.what());
      }
      return Mesh::from_json_text(payload);
    }
    if (sec.contains("lbar")) {
      allow_only(sec, "mesh", {"lbar"});
      const json& l = sec.at("lbar");
      const std::string s = "mesh.lbar";
      allow_only(l, s, {"long_leg", "short_leg", "thickness", "elems_thick", "elems_long", "elems_short",
                        "material"});
      return build_lbar_mesh(positive(l, s, "long_leg", std::nullopt), positive(l, s, "short_leg", std::nullopt),
                             positive(l, s, "thickness", std::nullopt), integer(l, s, "elems_thick", 1, 1),
                             integer(l, s, "elems_long", 8, 1), integer(l, s, "elems_short", 8, 1),
                             text(l, s, "material", std::nullopt));
    }
    return Mesh::from_json_text(sec.dump());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("mesh", e.what());
  }
}

PathStatus status_from_name(const std::string& s) {
  if (s == "Converged") return PathStatus::Converged;
  if (s == "EPProximity") return PathStatus::EPProximity;
  if (s == "StepUnderflow") return PathStatus::StepUnderflow;
  return PathStatus::MaxSteps;
}

void put_doubles(std::string& out, const double* v, std::size_t n) {
  static_assert(sizeof(double) == 8);
  out.append(reinterpret_cast<const char*>(v), n * sizeof(double));
}

bool isotropic(const MaterialTensor& m) {
  const auto& c = m.c_real;
  const double s = c.cwiseAbs().maxCoeff();
  auto eq = [&](double a, double b) { return std::abs(a - b) <= 1e-9 * s; };
  return eq(c(0, 0), c(1, 1)) && eq(c(1, 1), c(2, 2)) && eq(c(3, 3), c(4, 4)) && eq(c(4, 4), c(5, 5)) &&
         eq(c(0, 1), c(0, 0) - 2.0 * c(3, 3)) && eq(c(0, 2), c(0, 1)) && eq(c(1, 2), c(0, 1));
}

std::vector<double> sampled(std::vector<double> v, int count) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  if (count <= 0 || static_cast<int>(v.size()) <= count) return v;
  std::vector<double> out;
  for (int i = 0; i < count; ++i)
    out.push_back(v[static_cast<std::size_t>(std::llround(double(i) * (v.size() - 1) / std::max(1, count - 1)))]);
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

std::uint64_t content_hash(const std::string& bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

PipelineConfig parse_config(const std::string& json_text, const fs::path& base) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError("config", std::string("invalid JSON: ") + e.what());
  }
  allow_only(doc, "", {"material_library", "laminate", "mesh", "normalization", "sweep", "filter", "homotopy",
                       "diagnostics", "verify", "jobs", "output_dir"});
  PipelineConfig cfg;
  cfg.library = parse_library(doc, base);

  const json& norm = doc.contains("normalization") ? doc.at("normalization") : throw ConfigError(
      "normalization", "required section is missing");
  allow_only(norm, "normalization", {"a", "c_T"});
  cfg.norm.char_length = positive(norm, "normalization", "a", std::nullopt);
  cfg.norm.char_speed = positive(norm, "normalization", "c_T", 3000.0);

  if (doc.contains("laminate") == doc.contains("mesh"))
    throw ConfigError("laminate", "exactly one of the laminate and mesh sections is required");
  if (doc.contains("laminate")) {
    cfg.laminate = parse_laminate(doc.at("laminate"), cfg.elems_per_ply, cfg.order);
    for (std::size_t i = 0; i < cfg.laminate->plies.size(); ++i)
      if (!cfg.library.contains(cfg.laminate->plies[i].material))
        throw ConfigError("laminate", "unknown material '" + cfg.laminate->plies[i].material + "'");
    try {
      cfg.mesh = build_laminate_mesh(*cfg.laminate, cfg.elems_per_ply, cfg.order);
    } catch (const std::exception& e) {
      throw ConfigError("laminate", e.what());
    }
  } else {
    cfg.mesh = parse_mesh(doc.at("mesh"), base);
  }
  for (const auto& el : cfg.mesh.elements)
    if (!cfg.library.contains(el.material))
      throw ConfigError(cfg.laminate ? "laminate" : "mesh", "unknown material '" + el.material + "'");
  try {
    cfg.mesh.validate(cfg.norm.char_length);
  } catch (const std::exception& e) {
    throw ConfigError(cfg.laminate ? "laminate" : "mesh", e.what());
  }

  if (!doc.contains("sweep")) throw ConfigError("sweep", "required section is missing");
  const json& sw = doc.at("sweep");
  allow_only(sw, "sweep", {"k_min", "k_max", "points_per_unit", "eps_bar", "dk_min", "omega_max"});
  cfg.sweep.k_min = number(sw, "sweep", "k_min", 0.0);
  cfg.sweep.k_max = positive(sw, "sweep", "k_max", std::nullopt);
  cfg.sweep.points_per_unit = positive(sw, "sweep", "points_per_unit", 10.0);
  cfg.sweep.eps_bar = positive(sw, "sweep", "eps_bar", std::nullopt);
  cfg.sweep.dk_min = positive(sw, "sweep", "dk_min", 1e-3);
  cfg.sweep.omega_max = positive(sw, "sweep", "omega_max", std::nullopt);
  if (cfg.sweep.k_min < 0.0) throw ConfigError("sweep.k_min", "must be non-negative");
  if (!(cfg.sweep.k_max > cfg.sweep.k_min)) throw ConfigError("sweep.k_max", "must exceed k_min");

  const json& fl = section_of(doc, "filter");
  allow_only(fl, "filter", {"zeta_bar", "gamma_bar"});
  cfg.zeta_bar = number(fl, "filter", "zeta_bar", 0.01);
  cfg.gamma_bar = number(fl, "filter", "gamma_bar", 0.001);
  if (cfg.zeta_bar < 0.0) throw ConfigError("filter.zeta_bar", "must be non-negative");
  if (cfg.gamma_bar < 0.0) throw ConfigError("filter.gamma_bar", "must be non-negative");

  const json& ho = section_of(doc, "homotopy");
  const std::string h = "homotopy";
  allow_only(ho, h, {"ds_init_max", "ds_init_floor", "tau_bar", "growth", "shrink", "ds_floor", "newton_tol",
                     "max_newton", "max_steps", "condition_limit"});
  StepPolicy& p = cfg.policy;
  p.ds_init_max = positive(ho, h, "ds_init_max", 0.01);
  p.ds_init_floor = positive(ho, h, "ds_init_floor", 1e-3);
  p.tau_bar = positive(ho, h, "tau_bar", 0.99);
  p.growth = positive(ho, h, "growth", 1.1);
  p.shrink = positive(ho, h, "shrink", 0.5);
  p.ds_floor = positive(ho, h, "ds_floor", 1e-7);
  p.newton_tol = positive(ho, h, "newton_tol", 1e-10);
  p.max_newton = integer(ho, h, "max_newton", 8, 1);
  p.max_steps = integer(ho, h, "max_steps", 20000, 1);
  p.condition_limit = positive(ho, h, "condition_limit", 6.7108864e7);
  try {
    p.validate();
  } catch (const std::exception& e) {
    throw ConfigError("homotopy", e.what());
  }

  const json& di = section_of(doc, "diagnostics");
  allow_only(di, "diagnostics", {"contrast_ratio", "propagation_ratio", "x_crit", "x_crit_factor", "approach_ratio", "core_ratio", "swap"});
  cfg.diagnostics.contrast_ratio = positive(di, "diagnostics", "contrast_ratio", 0.2);
  if (di.contains("x_crit") && !di.at("x_crit").is_null())
    cfg.diagnostics.x_crit = positive(di, "diagnostics", "x_crit", std::nullopt);
  cfg.diagnostics.x_crit_factor = positive(di, "diagnostics", "x_crit_factor", 5.0);
  cfg.diagnostics.approach_ratio = positive(di, "diagnostics", "approach_ratio", 0.5);
  cfg.diagnostics.core_ratio = positive(di, "diagnostics", "core_ratio", 2.0);
  cfg.diagnostics.propagation_ratio = positive(di, "diagnostics", "propagation_ratio", 5.0);
  if (di.contains("swap")) {
    const auto& sv = di.at("swap");
    if (!sv.is_array()) throw ConfigError("diagnostics.swap", "expected an array of event indices");
    for (const auto& e : sv) {
      if (!e.is_number_integer() || e.get<int>() < 0)
        throw ConfigError("diagnostics.swap", "expected non-negative integers");
      cfg.swap_events.push_back(e.get<int>());
    }
  }

  const json& ve = section_of(doc, "verify");
  const std::string v = "verify";
  allow_only(ve, v, {"frequencies", "min_omega_fraction", "match_tol", "lamb_tol", "velocity_tol", "velocity_samples", "residual_tol"});
  cfg.verify.frequencies = integer(ve, v, "frequencies", 5, 0);
  cfg.verify.min_omega_fraction = number(ve, v, "min_omega_fraction", 0.01);
  cfg.verify.match_tol = positive(ve, v, "match_tol", 1e-8);
  cfg.verify.lamb_tol = positive(ve, v, "lamb_tol", 5e-3);
  cfg.verify.velocity_tol = positive(ve, v, "velocity_tol", 1e-6);
  cfg.verify.velocity_samples = integer(ve, v, "velocity_samples", 200, 0);
  cfg.verify.residual_tol = positive(ve, v, "residual_tol", 1e-10);

  cfg.jobs = integer(doc, "", "jobs", 8, 1);
  cfg.output_dir = text(doc, "", "output_dir", std::string("out"));
  cfg.sweep.jobs = cfg.jobs;

  // settings that shape sweep through post; later stages are cheap to redo
  json fp = doc;
  fp.erase("jobs");
  fp.erase("output_dir");
  fp.erase("verify");
  fp.erase("diagnostics");  // only shapes the diagnose output, which is rebuilt from dataset.json
  fp["mesh_hash"] = hex64(content_hash(cfg.mesh.to_json_text()));
  fp["library"] = cfg.library.to_json_text();
  cfg.fingerprint = hex64(content_hash(fp.dump()));
  return cfg;
}

PipelineConfig load_config(const fs::path& path) {
  std::string payload;
  try {
    payload = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError("config", e.what());
  }
  return parse_config(payload, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

Stage stage_from_name(const std::string& n) {
  if (n == "sweep") return Stage::Sweep;
  if (n == "filter") return Stage::Filter;
  if (n == "transport") return Stage::Transport;
  if (n == "post") return Stage::Post;
  if (n == "diagnose") return Stage::Diagnose;
  if (n == "verify") return Stage::Verify;
  if (n == "all") return Stage::All;
  throw std::invalid_argument("unknown stage '" + n + "'");
}

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::Sweep: return "sweep";
    case Stage::Filter: return "filter";
    case Stage::Transport: return "transport";
    case Stage::Post: return "post";
    case Stage::Diagnose: return "diagnose";
    case Stage::Verify: return "verify";
    default: return "all";
  }
}

bool VerifyReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const VerifyCheck& c) { return c.passed; });
}

std::string endpoints_sidecar(const std::vector<HomotopyPath>& paths) {
  int n = 0, count = 0;
  for (const auto& p : paths)
    if (p.endpoint) {
      n = static_cast<int>(p.endpoint->q.size());
      ++count;
    }
  std::string out = json{{"paths", paths.size()}, {"endpoints", count}, {"n", n}}.dump() + "\n";
  for (const auto& p : paths) {
    if (!p.endpoint) continue;
    const double head[3] = {p.endpoint->k.real(), p.endpoint->k.imag(), p.endpoint->s};
    put_doubles(out, head, 3);
    put_doubles(out, reinterpret_cast<const double*>(p.endpoint->q.data()), 2 * p.endpoint->q.size());
  }
  return out;
}

std::vector<HomotopyPath> paths_from_artifacts(const std::string& json_text, const std::string& sidecar) {
  const auto arr = json::parse(json_text);
  const auto nl = sidecar.find('\n');
  if (nl == std::string::npos) throw std::runtime_error("endpoint sidecar: missing header");
  const auto head = json::parse(sidecar.substr(0, nl));
  const int n = head.at("n").get<int>();
  const std::size_t count = head.at("endpoints").get<std::size_t>();
  const std::size_t record = (3 + 2 * static_cast<std::size_t>(n)) * sizeof(double);
  if (sidecar.size() != nl + 1 + count * record) throw std::runtime_error("endpoint sidecar: size mismatch");
  std::vector<HomotopyPath> paths;
  std::size_t at = nl + 1;
  for (const auto& j : arr) {
    HomotopyPath p;
    p.omega_hat = j.at("omega_hat").get<double>();
    p.branch_label = j.at("branch_label").get<int>();
    p.grid_index = j.at("grid_index").get<int>();
    p.family = family_from_name(j.at("family").get<std::string>());
    p.k_anchor = j.at("k_anchor").get<double>();
    p.status = status_from_name(j.at("status").get<std::string>());
    p.stats.initial_step = j.at("initial_step").get<double>();
    p.stats.min_step = j.at("min_step").get<double>();
    p.stats.steps = j.at("steps").get<int>();
    p.stats.newton_iterations = j.at("newton_iterations").get<int>();
    p.stats.rejections = j.at("rejections").get<int>();
    p.stats.max_condition = j.at("max_condition").get<double>();
    for (const auto& s : j.at("samples"))
      p.samples.push_back({s.at(0).get<double>(), cplx(s.at(1).get<double>(), s.at(2).get<double>()),
                           s.at(3).get<double>()});
    if (p.status == PathStatus::Converged) {
      if (at + record > sidecar.size()) throw std::runtime_error("endpoint sidecar: too few records");
      double headv[3];
      std::memcpy(headv, sidecar.data() + at, sizeof headv);
      ExtendedState e;
      e.k = cplx(headv[0], headv[1]);
      e.s = headv[2];
      e.q.resize(n);
      std::memcpy(reinterpret_cast<char*>(e.q.data()), sidecar.data() + at + sizeof headv,
                  2 * static_cast<std::size_t>(n) * sizeof(double));
      at += record;
      p.last_good = e;
      p.endpoint = e;
    }
    paths.push_back(std::move(p));
  }
  return paths;
}

Pipeline::Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) {}

fs::path Pipeline::out(const std::string& rel) const { return cfg_.output_dir / rel; }

bool Pipeline::load_from_disk(Stage producer) const {
  return single_ && *single_ != Stage::All && static_cast<int>(producer) < static_cast<int>(*single_);
}

const SystemMatrices& Pipeline::matrices() {
  if (!mats_) mats_ = assemble(cfg_.mesh, cfg_.library, cfg_.norm, cfg_.jobs);
  return *mats_;
}

const SweepResult& Pipeline::sweep() {
  if (sweep_) return *sweep_;
  if (load_from_disk(Stage::Sweep)) {
    sweep_ = SweepResult::from_artifacts(read_file(out("sweep.json")), read_file(out("eigvecs.bin")));
  } else {
    sweep_ = adaptive_sweep(matrices(), cfg_.mesh, cfg_.sweep);
  }
  return *sweep_;
}

const KeySet& Pipeline::keys() {
  if (keys_) return *keys_;
  if (load_from_disk(Stage::Filter)) {
    keys_ = KeySet::from_json_text(read_file(out("keypoints.json")), sweep().n_modes);
  } else {
    keys_ = filter_keypoints(sweep(), cfg_.zeta_bar, cfg_.gamma_bar, matrices().m);
  }
  return *keys_;
}

const GapInfo& Pipeline::gaps() {
  if (!gaps_) gaps_ = reference_gap(sweep(), keys());
  return *gaps_;
}

const std::vector<HomotopyPath>& Pipeline::paths() {
  if (paths_) return *paths_;
  if (load_from_disk(Stage::Transport)) {
    paths_ = paths_from_artifacts(read_file(out("paths/paths.json")), read_file(out("paths/endpoints.bin")));
  } else {
    skipped_.clear();
    const auto jobs = transport_jobs(keys(), sweep(), gaps(), cfg_.policy, &skipped_);
    paths_ = transport_all(jobs, matrices(), cfg_.policy, cfg_.jobs);
  }
  return *paths_;
}

const std::vector<AnchorSolution>& Pipeline::skipped_anchors() {
  paths();
  return skipped_;
}

const DispersionDataset& Pipeline::dataset() {
  if (dataset_) return *dataset_;
  if (load_from_disk(Stage::Post)) {
    dataset_ = dataset_from_json_text(read_file(out("dataset/dataset.json")));
    return *dataset_;
  }
  DispersionDataset ds = build_dataset(paths(), cfg_.mesh, cfg_.library, matrices(), cfg_.jobs);
  ds.provenance["mesh_hash"] = hex64(content_hash(cfg_.mesh.to_json_text()));
  ds.provenance["config_fingerprint"] = cfg_.fingerprint;
  ds.provenance["dof"] = std::to_string(matrices().n);
  ds.provenance["zeta_bar"] = format_double(cfg_.zeta_bar);
  ds.provenance["gamma_bar"] = format_double(cfg_.gamma_bar);
  ds.provenance["ds_init_max"] = format_double(cfg_.policy.ds_init_max);
  ds.provenance["tau_bar"] = format_double(cfg_.policy.tau_bar);
  ds.provenance["newton_tol"] = format_double(cfg_.policy.newton_tol);
  dataset_ = std::move(ds);
  return *dataset_;
}

double Pipeline::x_crit_used() {
  events();
  return x_crit_used_;
}

const std::vector<InteractionEvent>& Pipeline::events() {
  if (events_) return *events_;
  const DispersionDataset& ds = dataset();
  x_crit_used_ = cfg_.diagnostics.x_crit.value_or(cfg_.diagnostics.x_crit_factor * median_velocity_discrepancy(ds));
  events_ = detect_interactions(ds, cfg_.diagnostics);
  return *events_;
}

VerifyReport Pipeline::verify() {
  if (verify_) return *verify_;
  VerifyReport rep;
  ojson doc;
  const auto& ps = paths();
  const SystemMatrices& mats = matrices();
  const VerifySettings& vs = cfg_.verify;

  // dataset rows against the endpoints they came from
  {
    VerifyCheck c;
    c.name = "dataset_consistency";
    std::multiset<std::tuple<double, double, double>> expected;
    for (const auto& p : ps)
      if (p.endpoint) expected.insert({p.omega_hat, p.endpoint->k.real(), p.endpoint->k.imag()});
    int rows = 0, mismatched = 0;
    std::vector<std::string> bad;
    if (fs::exists(out("dataset"))) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(out("dataset")))
        if (e.path().extension() == ".csv") files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        std::istringstream in(read_file(f));
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
          if (line.empty()) continue;
          ++rows;
          std::istringstream ls(line);
          std::string w, kr, ki;
          std::getline(ls, w, ',');
          std::getline(ls, kr, ',');
          std::getline(ls, ki, ',');
          try {
            auto it = expected.find({std::stod(w), std::stod(kr), std::stod(ki)});
            if (it == expected.end()) throw std::invalid_argument("no endpoint");
            expected.erase(it);
          } catch (const std::exception&) {
            ++mismatched;
            if (bad.size() < 20) bad.push_back(f.filename().string() + ": " + line);
          }
        }
      }
    }
    if (rows == 0 && expected.empty()) {
      c.vacuous = true;
      c.detail = "warning: empty dataset, nothing to compare";
    } else {
      c.passed = mismatched == 0 && expected.empty();
      c.detail = std::to_string(rows) + " rows, " + std::to_string(mismatched) + " without an endpoint, " +
                 std::to_string(expected.size()) + " endpoints missing from the CSVs";
    }
    doc["dataset_consistency"] = {{"rows", rows}, {"mismatched_rows", bad}, {"missing", expected.size()}};
    rep.checks.push_back(c);
  }

  // continuation residuals
  {
    VerifyCheck c;
    c.name = "continuation_residuals";
    double worst = 0.0;
    long samples = 0, above = 0;
    for (const auto& p : ps)
      for (const auto& s : p.samples) {
        ++samples;
        worst = std::max(worst, s.residual);
        above += s.residual > vs.residual_tol;
      }
    c.vacuous = samples == 0;
    c.passed = above == 0;
    c.detail = std::to_string(samples) + " samples, max |G| " + format_double(worst);
    doc["continuation_residuals"] = {{"samples", samples}, {"above_tolerance", above}, {"max", worst}};
    rep.checks.push_back(c);
  }

  // dense linearization at s = 1
  {
    VerifyCheck c;
    c.name = "oracle_endpoints";
    std::vector<double> freqs;
    for (const auto& p : ps)
      if (p.endpoint && p.omega_hat >= vs.min_omega_fraction * cfg_.sweep.omega_max) freqs.push_back(p.omega_hat);
    freqs = sampled(freqs, vs.frequencies);
    ojson per = ojson::array();
    double worst = 0.0;
    int unmatched = 0;
    if (mats.n > 3000) {
      c.vacuous = true;
      c.detail = "skipped: system too large for the dense oracle";
    } else {
      for (double w : freqs) {
        const auto spec = linearized_spectrum(mats, w, 1.0);
        std::set<std::size_t> used;
        ojson matched = ojson::array(), missed = ojson::array();
        double fworst = 0.0;
        for (const auto& p : ps) {
          if (!p.endpoint || p.omega_hat != w) continue;
          const cplx k = p.endpoint->k;
          std::size_t best = 0;
          double dev = std::numeric_limits<double>::infinity();
          for (std::size_t i = 0; i < spec.size(); ++i) {
            const double d = std::abs(spec[i] - k) / std::abs(k);
            if (d < dev) {
              dev = d;
              best = i;
            }
          }
          fworst = std::max(fworst, dev);
          const ojson entry = {{"label", p.branch_label}, {"k", {k.real(), k.imag()}}, {"deviation", dev}};
          if (dev <= vs.match_tol && used.insert(best).second) {
            matched.push_back(entry);
          } else {
            missed.push_back(entry);
            ++unmatched;
          }
        }
        worst = std::max(worst, fworst);
        per.push_back({{"omega_hat", w}, {"matched", matched}, {"unmatched", missed}, {"max_deviation", fworst}});
      }
      c.vacuous = freqs.empty();
      c.passed = unmatched == 0;
      c.detail = std::to_string(freqs.size()) + " frequencies, " + std::to_string(unmatched) +
                 " unmatched, max relative deviation " + format_double(worst);
    }
    doc["oracle_endpoints"] = {{"frequencies", per}, {"max_deviation", worst}};
    rep.checks.push_back(c);
  }

  const SweepResult& sw = sweep();
  std::vector<std::pair<int, int>> anchors;
  for (int l = 0; l < sw.n_modes; ++l)
    for (int g : sw.branches[l])
      if (sw.points[g].k_hat > 1e-9 && sw.points[g].omega[l] >= vs.min_omega_fraction * cfg_.sweep.omega_max)
        anchors.push_back({l, g});

  // lossless velocity identity
  {
    VerifyCheck c;
    c.name = "lossless_velocities";
    std::vector<std::pair<int, int>> pick;
    const int m = static_cast<int>(anchors.size());
    const int want = std::min(m, vs.velocity_samples);
    for (int i = 0; i < want; ++i) pick.push_back(anchors[static_cast<std::size_t>(i) * m / want]);
    double worst = 0.0;
    for (const auto& [l, g] : pick) {
      const auto a = sw.solution(l, g);
      const ModePoint pt = evaluate_point(cfg_.mesh, cfg_.library, mats, a.k_hat, a.omega_hat, 0.0, a.eigenvector);
      worst = std::max(worst, std::abs(pt.vg - pt.ve) / std::abs(pt.ve));
    }
    c.vacuous = pick.empty();
    c.passed = worst <= vs.velocity_tol;
    c.detail = std::to_string(pick.size()) + " anchors, max |vg - ve| / |ve| " + format_double(worst);
    doc["lossless_velocities"] = {{"anchors", pick.size()}, {"max_discrepancy", worst}};
    rep.checks.push_back(c);
  }

  // analytic plate roots when the section is one isotropic material
  {
    VerifyCheck c;
    c.name = "rayleigh_lamb";
    bool applicable = cfg_.laminate.has_value();
    if (applicable)
      for (const auto& ply : cfg_.laminate->plies)
        applicable = applicable && ply.material == cfg_.laminate->plies.front().material &&
                     isotropic(cfg_.library.at(ply.material));
    if (!applicable) {
      c.vacuous = true;
      c.detail = "not applicable: section is not a single isotropic material";
      doc["rayleigh_lamb"] = {{"applicable", false}};
    } else {
      const MaterialTensor& iso = cfg_.library.at(cfg_.laminate->plies.front().material);
      const double a = cfg_.norm.char_length, ct0 = cfg_.norm.char_speed;
      const double h = cfg_.laminate->total_thickness() / a;
      const double cl = std::sqrt(iso.c_real(0, 0) / iso.density) / ct0;
      const double ct = std::sqrt(iso.c_real(3, 3) / iso.density) / ct0;
      double worst = 0.0;
      int checked = 0;
      for (const auto& [l, g] : anchors) {
        const double k = sw.points[g].k_hat, w = sw.points[g].omega[l];
        double best = std::numeric_limits<double>::infinity();
        int order = -1;
        for (const auto& r : rayleigh_lamb_roots(h, cl, ct, w)) {
          const double d = std::abs(k - r.k) / r.k;
          if (d < best) {
            best = d;
            order = r.order;
          }
        }
        if (order != 0) continue;  // fundamental modes only
        ++checked;
        worst = std::max(worst, best);
      }
      c.vacuous = checked == 0;
      c.passed = worst <= vs.lamb_tol;
      c.detail = std::to_string(checked) + " fundamental-mode anchors, max relative error " + format_double(worst);
      doc["rayleigh_lamb"] = {{"applicable", true}, {"checked", checked}, {"max_error", worst}};
    }
    rep.checks.push_back(c);
  }

  ojson checks = ojson::array();
  for (const auto& c : rep.checks)
    checks.push_back({{"name", c.name}, {"passed", c.passed}, {"vacuous", c.vacuous}, {"detail", c.detail}});
  doc["checks"] = checks;
  doc["passed"] = rep.passed();
  rep.json_text = doc.dump(1);
  verify_ = rep;
  return rep;
}

void Pipeline::write_stage(Stage s) {
  switch (s) {
    case Stage::Sweep: {
      const auto& sw = sweep();
      write_file(out("sweep.json"), sw.to_json_text());
      write_file(out("eigvecs.bin"), sw.eigvec_sidecar());
      break;
    }
    case Stage::Filter: {
      auto j = ojson::parse(keys().to_json_text());
      const GapInfo& g = gaps();
      auto opt = [](const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); };
      j["gap_reference"] = opt(g.reference);
      j["gap_veering"] = opt(g.veering);
      j["gap_quantile5"] = opt(g.quantile5);
      j["ds_init_min"] = min_initial_step(g.veering.value_or(0.0), cfg_.policy);
      write_file(out("keypoints.json"), j.dump(1));
      break;
    }
    case Stage::Transport: {
      const auto& ps = paths();
      fs::remove_all(out("paths"));
      write_file(out("paths/paths.json"), paths_to_json_text(ps));
      write_file(out("paths/endpoints.bin"), endpoints_sidecar(ps));
      ojson sk = ojson::array();
      for (const auto& a : skipped_)
        sk.push_back({{"label", a.branch_label}, {"grid_index", a.grid_index}, {"k_hat", a.k_hat},
                      {"omega_hat", a.omega_hat}});
      write_file(out("paths/skipped.json"), sk.dump(1));
      break;
    }
    case Stage::Post:
    case Stage::Diagnose: {
      DispersionDataset ds = dataset();
      if (s == Stage::Post) {
        fs::remove_all(out("dataset"));
        write_file(out("dataset/dataset.json"), dataset_json_text(ds));
      } else {
        const auto& ev = events();
        for (int idx : cfg_.swap_events) {
          if (idx >= static_cast<int>(ev.size()))
            throw StageError("diagnose", "swap index " + std::to_string(idx) + " is out of range");
          ds = swap_labels(ds, ev[idx]);
        }
        mark_events(ds, ev);
        write_file(out("diagnostics.json"), events_json_text(ev, cfg_.diagnostics, x_crit_used_));
        for (const auto& e : fs::directory_iterator(out("dataset")))
          if (e.path().extension() == ".csv") fs::remove(e.path());
      }
      for (const auto& b : ds.branches) {
        char name[40];
        std::snprintf(name, sizeof name, "dataset/branch_%02d.csv", b.label);
        write_file(out(name), branch_csv(b));
      }
      fs::remove_all(out("plots"));
      for (const auto& [name, body] : plot_scripts(ds, "../dataset")) write_file(out("plots/" + name), body);
      break;
    }
    case Stage::Verify:
      write_file(out("verify.json"), verify().json_text);
      break;
    default:
      break;
  }
}

void Pipeline::write_manifest() {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(cfg_.output_dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  ojson list = ojson::array();
  std::uint64_t total = 14695981039346656037ull;
  for (const auto& f : files) {
    const std::string rel = fs::relative(f, cfg_.output_dir).generic_string();
    const std::string bytes = read_file(f);
    total = content_hash(rel, total);
    total = content_hash(bytes, total);
    list.push_back({{"path", rel}, {"bytes", bytes.size()}, {"fnv1a64", hex64(content_hash(bytes))}});
  }
  ojson m;
  m["config_fingerprint"] = cfg_.fingerprint;
  m["mesh_hash"] = hex64(content_hash(cfg_.mesh.to_json_text()));
  m["dof"] = matrices().n;
  m["thresholds"] = {{"eps_bar", cfg_.sweep.eps_bar},       {"dk_min", cfg_.sweep.dk_min},
                     {"zeta_bar", cfg_.zeta_bar},           {"gamma_bar", cfg_.gamma_bar},
                     {"contrast_ratio", cfg_.diagnostics.contrast_ratio}};
  const StepPolicy& p = cfg_.policy;
  m["policy"] = {{"ds_init_max", p.ds_init_max}, {"ds_init_floor", p.ds_init_floor}, {"tau_bar", p.tau_bar},
                 {"growth", p.growth},           {"shrink", p.shrink},               {"ds_floor", p.ds_floor},
                 {"newton_tol", p.newton_tol},   {"max_newton", p.max_newton},       {"max_steps", p.max_steps},
                 {"condition_limit", p.condition_limit}};
  if (paths_) {
    std::map<std::string, int> st;
    for (const auto& x : *paths_) ++st[status_name(x.status)];
    m["statuses"] = st;
  }
  m["files"] = list;
  m["content_hash"] = hex64(total);
  write_file(out("manifest.json"), m.dump(1));
}

int Pipeline::run(Stage stage, std::ostream& log) {
  single_ = stage;
  std::vector<Stage> todo;
  if (stage == Stage::All)
    todo = {Stage::Sweep, Stage::Filter, Stage::Transport, Stage::Post, Stage::Diagnose, Stage::Verify};
  else
    todo = {stage};
  if (stage != Stage::All && stage != Stage::Sweep) {
    // earlier artifacts must come from this configuration
    std::string fp;
    try {
      fp = json::parse(read_file(out("manifest.json"))).at("config_fingerprint").get<std::string>();
    } catch (const std::exception&) {
      throw StageError(stage_name(stage), "no manifest in " + cfg_.output_dir.string() + "; run the earlier stages first");
    }
    if (fp != cfg_.fingerprint)
      throw StageError(stage_name(stage), "artifacts in " + cfg_.output_dir.string() +
                                              " were produced by a different configuration");
  }
  int status = 0;
  for (Stage s : todo) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      write_stage(s);
      write_manifest();
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(stage_name(s), e.what());
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log << "[" << stage_name(s) << "] ";
    switch (s) {
      case Stage::Sweep:
        log << sweep_->points.size() << " wavenumbers, " << sweep_->solution_count() << " solutions, "
            << sweep_->n_modes << " labels";
        break;
      case Stage::Filter:
        log << keys_->count() << " key points (" << format_double(100.0 * keys_->retention_fraction)
            << "% retained), veering gap " << (gaps_->veering ? format_double(*gaps_->veering) : "n/a");
        break;
      case Stage::Transport: {
        std::map<std::string, int> st;
        for (const auto& p : *paths_) ++st[status_name(p.status)];
        log << paths_->size() << " paths";
        for (const auto& [k, v] : st) log << ", " << k << " " << v;
        break;
      }
      case Stage::Post:
        log << dataset_->point_count() << " points on " << dataset_->branches.size() << " branches";
        break;
      case Stage::Diagnose: {
        int sus = 0;
        for (const auto& e : *events_) sus += e.classification == InteractionType::TypeIISuspect;
        log << events_->size() << " interaction events, " << sus << " TypeIISuspect";
        break;
      }
      case Stage::Verify:
        for (const auto& c : verify_->checks)
          log << "\n  " << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail;
        break;
      default:
        break;
    }
    log << " (" << std::fixed;
    log.precision(1);
    log << dt << " s)" << std::defaultfloat << std::endl;
    log.precision(6);
  }
  if (verify_ && !verify_->passed()) status = 4;
  if (status == 0 && paths_)
    for (const auto& p : *paths_)
      if (p.status != PathStatus::Converged) status = 3;
  return status;
}

namespace {

std::vector<double> repeat(const std::vector<double>& base, int times) {
  std::vector<double> out;
  for (int r = 0; r < times; ++r) out.insert(out.end(), base.begin(), base.end());
  return out;
}

std::vector<double> mirrored(std::vector<double> half) {
  std::vector<double> out = half;
  out.insert(out.end(), half.rbegin(), half.rend());
  return out;
}

ojson laminate_config(const std::string& name, const std::string& material, const std::vector<double>& angles) {
  ojson c;
  c["material_library"] = {{"builtin", true}};
  c["laminate"] = {{"material", material}, {"angles", angles}, {"ply_thickness", 0.25e-3},
                   {"propagation_angle", 0.0}, {"elems_per_ply", 2}, {"order", 5}};
  c["normalization"] = {{"a", 2e-3}, {"c_T", 3000.0}};
  // 5000 kHz mm over the 4 mm laminate
  c["sweep"] = {{"k_min", 0.0}, {"k_max", 10.0}, {"points_per_unit", 10}, {"eps_bar", 0.05},
                {"dk_min", 1e-3}, {"omega_max", 2.0 * M_PI * 1.25e6 * 2e-3 / 3000.0}};
  c["filter"] = {{"zeta_bar", 0.01}, {"gamma_bar", 0.001}};
  c["homotopy"] = {{"ds_init_max", 0.01}, {"tau_bar", 0.99}, {"growth", 1.1}, {"shrink", 0.5},
                   {"ds_floor", 1e-7},    {"newton_tol", 1e-10}, {"max_newton", 8}};
  c["diagnostics"] = {{"contrast_ratio", 0.2}, {"x_crit", nullptr}};
  c["jobs"] = 8;
  c["output_dir"] = "out/" + name;
  return c;
}

}  // namespace

// L-bar: 30 x 20 mm unequal angle, 2 mm wall
constexpr double kLbarLong = 30e-3, kLbarShort = 20e-3, kLbarWall = 2e-3;
constexpr int kLbarThick = 1, kLbarElemsLong = 32, kLbarElemsShort = 21;
constexpr double kLbarOmegaMax = 5.0;

std::map<std::string, std::string> fixture_files() {
  std::map<std::string, std::string> f;
  const std::vector<double> sym_base = {0, 90, 45, -45};
  f["sym1.json"] = laminate_config("sym1", "hernando", mirrored(repeat(sym_base, 2))).dump(2);
  f["sym2.json"] = laminate_config("sym2", "castaings", mirrored(repeat({0, 45, -45, 90}, 2))).dump(2);
  // this ordering gives a veering gap near 6e-3; {0, 90, 45, -45} gives a tenth of it
  f["unsym1.json"] = laminate_config("unsym1", "hernando", repeat({0, 45, -45, 90}, 4)).dump(2);
  f["unsym2.json"] = laminate_config("unsym2", "hernando", repeat({0, 15, -15, 30, -30, 45, -45, 90}, 2)).dump(2);
  f["unsym3.json"] = laminate_config("unsym3", "castaings_eta0.05", repeat(sym_base, 4)).dump(2);

  const Mesh lbar = build_lbar_mesh(kLbarLong, kLbarShort, kLbarWall, kLbarThick, kLbarElemsLong,
                                    kLbarElemsShort, "aluminium");
  f["lbar_mesh.json"] = lbar.to_json_text();
  ojson c = laminate_config("lbar", "aluminium", {0.0});
  c.erase("laminate");
  ojson lb;
  lb["material_library"] = c["material_library"];
  lb["mesh"] = {{"file", "lbar_mesh.json"}};
  lb["normalization"] = {{"a", 0.5 * kLbarShort}, {"c_T", 3000.0}};
  lb["sweep"] = c["sweep"];
  lb["sweep"]["omega_max"] = kLbarOmegaMax;
  for (const char* k : {"filter", "homotopy", "diagnostics", "jobs", "output_dir"}) lb[k] = c[k];
  f["lbar.json"] = lb.dump(2);
  return f;
}

PipelineConfig aluminium_plate_config() {
  ojson c;
  c["material_library"] = {{"builtin", true}};
  c["laminate"] = {{"plies", {{{"material", "aluminium_elastic"}, {"angle", 0.0}, {"thickness", 1e-3}}}},
                   {"elems_per_ply", 4}, {"order", 5}};
  c["normalization"] = {{"a", 0.5e-3}, {"c_T", 3000.0}};
  // 5000 kHz mm over the 1 mm plate
  c["sweep"] = {{"k_max", 10.0}, {"eps_bar", 0.05}, {"omega_max", 2.0 * M_PI * 5e6 * 0.5e-3 / 3000.0}};
  c["jobs"] = 1;
  c["output_dir"] = "out/aluminium";
  return parse_config(c.dump());
}

}  // namespace safehc
