#include "gessa/pipeline.hpp"

#include "gessa/csv.hpp"
#include "gessa/heritability.hpp"
#include "gessa/icp.hpp"
#include "gessa/maps.hpp"
#include "gessa/mesh_io.hpp"
#include "gessa/parallel.hpp"
#include "gessa/traits.hpp"

#include <boost/version.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace gessa {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

const char* version() { return "0.1.0"; }

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  std::string s = v;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

double parse_number(const std::string& key, const std::string& v) {
  try {
    return csv::parse_double(v);
  } catch (const Error&) {
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  }
}

int parse_integer(const std::string& key, const std::string& v) {
  try {
    return csv::parse_int(v);
  } catch (const Error&) {
    throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
  }
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (!trim(item).empty()) out.push_back(trim(item));
  return out;
}

std::string kind_name(CurvatureKind k) { return to_string(k); }

std::vector<fs::path> mesh_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".obj" || ext == ".ply") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Missing entries of a centred matrix become zero (the column mean).
Eigen::MatrixXd complete_columns(const TraitMatrix& m, std::vector<int>& used) {
  used.clear();
  for (int c = 0; c < m.cols(); ++c)
    if (m.flagged.empty() || !m.flagged[c]) used.push_back(c);
  Eigen::MatrixXd p(m.rows(), static_cast<Eigen::Index>(used.size()));
  for (size_t i = 0; i < used.size(); ++i) {
    p.col(static_cast<Eigen::Index>(i)) = m.values.col(used[i]);
    for (int r = 0; r < m.rows(); ++r)
      if (std::isnan(p(r, static_cast<Eigen::Index>(i)))) p(r, static_cast<Eigen::Index>(i)) = 0.0;
  }
  return p;
}

}  // namespace

std::vector<std::string> PipelineConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, v] : PipelineConfig{}.entries()) out.push_back(k);
  return out;
}

std::vector<std::pair<std::string, std::string>> PipelineConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> e{
      {"input_dir", input_dir.string()},
      {"output_dir", output_dir.string()},
      {"registry", registry.string()},
      {"distance_defs", distance_defs.string()},
      {"gtl", gtl.string()},
      {"width_pair", width_pair},
      {"align", bool_text(align)},
      {"align_reference", align_reference},
      {"icp_iters", std::to_string(icp_iters)},
      {"seed", std::to_string(sampling.seed)},
      {"landmarks", std::to_string(sampling.target_landmarks)},
      {"gamma", csv::format_double(sampling.gamma)},
      {"alpha", csv::format_double(sampling.alpha)},
      {"inner_iters", std::to_string(sampling.inner_iters)},
      {"coarse_iters", std::to_string(sampling.coarse_iters)},
      {"conv_tol", csv::format_double(sampling.conv_tol)},
      {"kernel_cutoff", csv::format_double(sampling.kernel_cutoff)},
      {"max_halvings", std::to_string(sampling.max_halvings)},
      {"shape_term", bool_text(sampling.shape_term)},
      {"surface_term", bool_text(sampling.surface_term)},
      {"threads", std::to_string(sampling.threads)},
  };
  std::string kinds;
  for (auto k : curvature_kinds) kinds += (kinds.empty() ? "" : ",") + kind_name(k);
  e.push_back({"curvature_kinds", kinds});
  e.push_back({"si_literal_constant", bool_text(si_literal_constant)});
  for (auto k : {CurvatureKind::MC, CurvatureKind::GC, CurvatureKind::CU, CurvatureKind::SI})
    e.push_back({"sp_" + kind_name(k), csv::format_double(sparsity.at(k))});
  e.push_back({"components", std::to_string(components)});
  e.push_back({"residualize_age", bool_text(residualize_age)});
  e.push_back({"max_missing", csv::format_double(max_missing)});
  return e;
}

void PipelineConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "input_dir") input_dir = v;
  else if (key == "output_dir") output_dir = v;
  else if (key == "registry") registry = v;
  else if (key == "distance_defs") distance_defs = v;
  else if (key == "gtl") gtl = v;
  else if (key == "width_pair") width_pair = v;
  else if (key == "align") align = parse_bool(key, v);
  else if (key == "align_reference") align_reference = v;
  else if (key == "icp_iters") icp_iters = parse_integer(key, v);
  else if (key == "seed") {
    try {
      sampling.seed = std::stoull(v);
    } catch (const std::exception&) {
      throw ConfigError("'seed' expects a non-negative integer, got '" + v + "'");
    }
  }
  else if (key == "landmarks") sampling.target_landmarks = parse_integer(key, v);
  else if (key == "gamma") sampling.gamma = parse_number(key, v);
  else if (key == "alpha") sampling.alpha = parse_number(key, v);
  else if (key == "inner_iters") sampling.inner_iters = parse_integer(key, v);
  else if (key == "coarse_iters") sampling.coarse_iters = parse_integer(key, v);
  else if (key == "conv_tol") sampling.conv_tol = parse_number(key, v);
  else if (key == "kernel_cutoff") sampling.kernel_cutoff = parse_number(key, v);
  else if (key == "max_halvings") sampling.max_halvings = parse_integer(key, v);
  else if (key == "shape_term") sampling.shape_term = parse_bool(key, v);
  else if (key == "surface_term") sampling.surface_term = parse_bool(key, v);
  else if (key == "threads") sampling.threads = parse_integer(key, v);
  else if (key == "curvature_kinds") {
    curvature_kinds.clear();
    for (const auto& s : split_list(v)) {
      try {
        curvature_kinds.push_back(curvature_kind_from_string(s));
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
    }
  } else if (key == "si_literal_constant") si_literal_constant = parse_bool(key, v);
  else if (key.rfind("sp_", 0) == 0) {
    try {
      sparsity[curvature_kind_from_string(key.substr(3))] = parse_number(key, v);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error&) {
      throw ConfigError("unknown configuration key '" + key + "'");
    }
  } else if (key == "components") components = parse_integer(key, v);
  else if (key == "residualize_age") residualize_age = parse_bool(key, v);
  else if (key == "max_missing") max_missing = parse_number(key, v);
  else throw ConfigError("unknown configuration key '" + key + "'");
}

void PipelineConfig::check(bool need_input) const {
  if (need_input) {
    if (input_dir.empty()) throw ConfigError("input_dir is not set");
    if (!fs::is_directory(input_dir)) throw ConfigError("input_dir '" + input_dir.string() + "' does not exist");
  }
  for (const auto& [name, p] : {std::pair{"registry", registry}, {"distance_defs", distance_defs}, {"gtl", gtl}})
    if (!p.empty() && !fs::exists(p)) throw ConfigError(std::string(name) + " '" + p.string() + "' does not exist");
  if (output_dir.empty()) throw ConfigError("output_dir is not set");
  try {
    sampling.check();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (icp_iters < 0) throw ConfigError("icp_iters must be non-negative");
  if (components < 1) throw ConfigError("components must be at least 1");
  for (const auto& [k, s] : sparsity)
    if (!(s >= 1.0)) throw ConfigError("sp_" + kind_name(k) + " must be at least 1");
  if (!(max_missing >= 0.0 && max_missing <= 1.0)) throw ConfigError("max_missing must lie in [0, 1]");
  if (curvature_kinds.empty()) throw ConfigError("curvature_kinds is empty");
}

void apply_config_file(PipelineConfig& config, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(number) + ": expected key = value");
    config.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

PipelineConfig read_config(const fs::path& path) {
  PipelineConfig c;
  apply_config_file(c, path);
  return c;
}

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {
  const fs::path manifest = out("manifest.json");
  if (!fs::exists(manifest)) return;
  try {
    std::ifstream in(manifest);
    const json j = json::parse(in);
    for (const auto& s : j.at("stages")) {
      StageRecord r;
      r.name = s.at("name");
      r.status = s.at("status");
      r.seconds = s.at("seconds");
      r.outputs = s.at("outputs").get<std::vector<std::string>>();
      if (s.contains("error")) r.error = s.at("error");
      stages_.push_back(r);
    }
  } catch (const std::exception&) {
    stages_.clear();  // unreadable manifest from another version: start over
  }
}

void Pipeline::write_manifest() const {
  json j;
  j["schema_version"] = 1;
  j["tool"] = "gessa";
  j["version"] = version();
  j["seed"] = config_.sampling.seed;
  json cfg = json::object();
  for (const auto& [k, v] : config_.entries()) cfg[k] = v;
  j["config"] = cfg;
  j["libraries"] = {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                  std::to_string(EIGEN_MINOR_VERSION)},
                    {"boost", BOOST_LIB_VERSION}};
  json stages = json::array();
  for (const auto& s : stages_) {
    json r{{"name", s.name}, {"status", s.status}, {"seconds", s.seconds}, {"outputs", s.outputs}};
    if (!s.error.empty()) r["error"] = s.error;
    stages.push_back(r);
  }
  j["stages"] = stages;
  std::ofstream o(out("manifest.json"));
  o << j.dump(2) << '\n';
}

void Pipeline::stage(const std::string& name, const std::function<std::vector<std::string>()>& body) {
  fs::create_directories(config_.output_dir);
  StageRecord rec;
  rec.name = name;
  const auto t0 = std::chrono::steady_clock::now();
  auto finish = [&](const std::string& status) {
    rec.status = status;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    stages_.erase(std::remove_if(stages_.begin(), stages_.end(), [&](const StageRecord& s) { return s.name == name; }),
                  stages_.end());
    stages_.push_back(rec);
    write_manifest();
  };
  try {
    rec.outputs = body();
  } catch (const ConfigError& e) {
    rec.error = e.what();
    finish("failed");
    throw;
  } catch (const std::exception& e) {
    rec.error = e.what();
    finish("failed");
    throw StageError(name, e.what());
  }
  finish("completed");
}

MeshEnsemble Pipeline::aligned_meshes() const {
  const csv::Table t = csv::read(out("transforms.csv"));
  const int cs = t.column("subject_id");
  std::vector<MeshPtr> meshes;
  std::vector<std::string> ids;
  for (const auto& row : t.rows) {
    ids.push_back(row[cs]);
    meshes.push_back(std::make_shared<TriangleMesh>(load_mesh(out("aligned") / (row[cs] + ".ply"))));
  }
  return MeshEnsemble(meshes, ids);
}

LandmarkEnsemble Pipeline::landmarks() const { return read_landmarks(out("landmarks.csv"), aligned_meshes()); }

void Pipeline::align() {
  config_.check(true);
  stage("align", [&] {
    const auto files = mesh_files(config_.input_dir);
    if (files.size() < 2) throw Error("input_dir needs at least two .obj or .ply meshes");
    std::vector<std::string> ids;
    std::vector<TriangleMesh> meshes;
    for (const auto& f : files) {
      ids.push_back(f.stem().string());
      meshes.push_back(load_mesh(f));
      if (meshes.back().num_components() > 1)
        std::cerr << "warning: " << f.string() << " has " << meshes.back().num_components()
                  << " connected components; sampling needs a single one\n";
    }
    if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size()) throw Error("duplicate subject ids");
    int ref = 0;
    if (!config_.align_reference.empty()) {
      const auto it = std::find(ids.begin(), ids.end(), config_.align_reference);
      if (it == ids.end()) throw ConfigError("align_reference '" + config_.align_reference + "' is not an input mesh");
      ref = static_cast<int>(it - ids.begin());
    }
    const int n = static_cast<int>(ids.size());
    std::vector<IcpResult> fits(n);
    parallel_for(n, config_.sampling.threads, [&](int j, int) {
      if (j != ref && config_.align) fits[j] = icp_align(meshes[j], meshes[ref], config_.icp_iters);
      else fits[j].converged = true;
    });
    fs::create_directories(out("aligned"));
    std::vector<std::string> outputs;
    std::ofstream tr(out("transforms.csv"));
    tr << "subject_id,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz,rms,converged\n";
    for (int j = 0; j < n; ++j) {
      const RigidTransform& t = fits[j].transform;
      MeshWriteOptions opt;
      opt.binary = true;
      save_mesh(out("aligned") / (ids[j] + ".ply"), transform_mesh(meshes[j], t), MeshFormat::Ply, opt);
      outputs.push_back("aligned/" + ids[j] + ".ply");
      std::vector<std::string> row{ids[j]};
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) row.push_back(csv::format_double(t.rotation(r, c)));
      for (int i = 0; i < 3; ++i) row.push_back(csv::format_double(t.translation[i]));
      row.push_back(fits[j].rms.empty() ? "0" : csv::format_double(fits[j].rms.back()));
      row.push_back(fits[j].converged ? "1" : "0");
      tr << csv::join(row) << '\n';
    }
    outputs.insert(outputs.begin(), "transforms.csv");
    return outputs;
  });
}

void Pipeline::sample() {
  config_.check(false);
  stage("sample", [&] {
    const SamplingResult r = sample_correspondences(aligned_meshes(), config_.sampling);
    write_landmarks(out("landmarks.csv"), r.ensemble);
    write_cost_trace(out("cost_trace.csv"), r.trace);
    return std::vector<std::string>{"landmarks.csv", "cost_trace.csv"};
  });
}

void Pipeline::curvature() {
  config_.check(false);
  stage("curvature", [&] {
    const LandmarkEnsemble e = landmarks();
    std::vector<std::string> outputs;
    for (auto k : config_.curvature_kinds) {
      const std::string name = "curvature_" + kind_name(k) + ".csv";
      write_trait_matrix(out(name), curvature_matrix(e, k, config_.si_literal_constant));
      outputs.push_back(name);
    }
    return outputs;
  });
}

void Pipeline::traits() {
  config_.check(false);
  stage("traits", [&] {
    std::vector<TwinRecord> registry;
    if (!config_.registry.empty()) registry = read_registry(config_.registry);
    auto adjust = [&](TraitMatrix m) {
      m.flag_missing(config_.max_missing);
      const bool ages = std::any_of(registry.begin(), registry.end(), [](const TwinRecord& r) { return r.age.has_value(); });
      if (config_.residualize_age && ages) {
        auto flagged = m.flagged;
        m = residualize_covariate(m, registry_ages(registry, m));
        m.flagged = flagged;
      } else {
        m.center();
      }
      return m;
    };
    std::vector<std::string> outputs;
    for (auto k : config_.curvature_kinds) {
      const std::string kn = kind_name(k);
      const TraitMatrix m = adjust(read_trait_matrix(out("curvature_" + kn + ".csv")));
      write_trait_matrix(out("traits_" + kn + ".csv"), m);
      outputs.push_back("traits_" + kn + ".csv");

      std::vector<int> used;
      const Eigen::MatrixXd p = complete_columns(m, used);
      if (used.empty()) throw Error("every " + kn + " column is flagged for missing values");
      const double sp = std::min(config_.sparsity.at(k), std::sqrt(static_cast<double>(used.size())));
      const int kc = std::min<int>(config_.components, static_cast<int>(used.size()));
      const SparsePcaResult pca = sparse_pca(p, kc, sp);

      std::vector<std::string> labels;
      for (int c : used) labels.push_back(m.labels[c]);
      write_loadings(out("loadings_" + kn + ".csv"), pca, labels);
      json comps = json::array();
      TraitMatrix scores;
      scores.subject_ids = m.subject_ids;
      scores.values.resize(m.rows(), static_cast<Eigen::Index>(pca.components.size()));
      for (size_t c = 0; c < pca.components.size(); ++c) {
        const auto& comp = pca.components[c];
        comps.push_back({{"component", c + 1},
                         {"d", comp.d},
                         {"s_p", comp.s_p},
                         {"explained", comp.explained},
                         {"cumulative_explained", pca.cumulative_explained[c]}});
        scores.values.col(static_cast<Eigen::Index>(c)) = p * comp.v;
        scores.labels.push_back("PC" + std::to_string(c + 1));
      }
      std::ofstream(out("spca_" + kn + ".json")) << json{{"kind", kn}, {"components", comps}}.dump(2) << '\n';
      write_trait_matrix(out("scores_" + kn + ".csv"), scores);
      outputs.insert(outputs.end(), {"loadings_" + kn + ".csv", "spca_" + kn + ".json", "scores_" + kn + ".csv"});
    }
    if (!config_.distance_defs.empty()) {
      const TraitMatrix d = distance_traits(landmarks(), read_distance_defs(config_.distance_defs));
      write_trait_matrix(out("distances.csv"), d);
      write_trait_matrix(out("traits_distances.csv"), adjust(d));
      outputs.insert(outputs.end(), {"distances.csv", "traits_distances.csv"});
    }
    return outputs;
  });
}

void Pipeline::heritability() {
  config_.check(false);
  stage("heritability", [&] {
    if (config_.registry.empty()) throw ConfigError("the heritability stage needs a registry");
    const auto registry = read_registry(config_.registry);
    std::vector<std::string> outputs;
    auto fit = [&](const std::string& in, const std::string& name) {
      TraitMatrix m = read_trait_matrix(out(in));
      m.flag_missing(config_.max_missing);
      write_heritability_map(out(name), heritability_map(m, registry, config_.sampling.threads));
      outputs.push_back(name);
    };
    for (auto k : config_.curvature_kinds) {
      const std::string kn = kind_name(k);
      fit("traits_" + kn + ".csv", "heritability_" + kn + ".csv");
      fit("scores_" + kn + ".csv", "heritability_scores_" + kn + ".csv");
    }
    if (fs::exists(out("traits_distances.csv"))) fit("traits_distances.csv", "heritability_distances.csv");
    return outputs;
  });
}

void Pipeline::map() {
  config_.check(false);
  stage("map", [&] {
    const AverageShape avg = compute_average_shape(landmarks());
    std::vector<std::string> outputs{"average_shape.ply", "average_landmarks.csv"};
    save_mesh(out("average_shape.ply"), avg.mesh, MeshFormat::Ply);
    {
      std::ofstream o(out("average_landmarks.csv"));
      o << "landmark_id,x,y,z\n";
      for (size_t k = 0; k < avg.landmarks.size(); ++k)
        o << k << ',' << csv::format_double(avg.landmarks[k].x()) << ',' << csv::format_double(avg.landmarks[k].y())
          << ',' << csv::format_double(avg.landmarks[k].z()) << '\n';
    }
    // Landmark k is vertex k of the average mesh; isolated ones cannot be drawn.
    std::vector<int> drawn;
    std::vector<SurfacePoint> points;
    for (int k = 0; k < avg.mesh.num_vertices(); ++k)
      if (!avg.mesh.vertex_faces(k).empty()) {
        drawn.push_back(k);
        points.push_back(vertex_point(avg.mesh, k));
      }
    auto export_values = [&](const std::map<int, double>& by_landmark, const std::string& stem, const std::string& title) {
      std::vector<std::optional<double>> values;
      for (int k : drawn) {
        auto it = by_landmark.find(k);
        values.push_back(it == by_landmark.end() ? std::nullopt : std::optional<double>(it->second));
      }
      export_map(out(stem + ".ply"), out(stem + ".csv"), avg.mesh, points, values, title);
      outputs.insert(outputs.end(), {stem + ".ply", stem + ".csv"});
    };
    for (auto k : config_.curvature_kinds) {
      const std::string kn = kind_name(k);
      if (fs::exists(out("heritability_" + kn + ".csv"))) {
        std::map<int, double> h2;
        for (const auto& r : read_heritability_map(out("heritability_" + kn + ".csv")))
          if (r.model) h2[csv::parse_int(r.trait_id)] = r.h2;
        export_values(h2, "map_h2_" + kn, "heritability " + kn);
      }
      if (fs::exists(out("loadings_" + kn + ".csv"))) {
        const csv::Table t = csv::read(out("loadings_" + kn + ".csv"));
        std::map<int, std::map<int, double>> comps;
        for (const auto& row : t.rows)
          comps[csv::parse_int(row[1])][csv::parse_int(row[0])] = csv::parse_double(row[2]);
        for (const auto& [c, weights] : comps)
          export_values(weights, "map_loadings_" + kn + "_pc" + std::to_string(c), "loadings " + kn + " PC" + std::to_string(c));
      }
    }
    return outputs;
  });
}

void Pipeline::validate() {
  config_.check(false);
  stage("validate", [&] {
    if (config_.gtl.empty()) throw ConfigError("the validate stage needs gtl");
    const auto pair = split_list(config_.width_pair);
    if (pair.size() != 2) throw ConfigError("width_pair must name two ground-truth landmarks as a,b");
    const ValidationReport r = validate_landmarks(landmarks(), read_ground_truth(config_.gtl), pair[0], pair[1]);
    write_validation_report(out("validation.csv"), r);
    return std::vector<std::string>{"validation.csv"};
  });
}

void Pipeline::run() {
  stages_.clear();
  align();
  sample();
  curvature();
  traits();
  heritability();
}

}  // namespace gessa
