#include "gessa/maps.hpp"

#include "gessa/csv.hpp"
#include "gessa/geodesic.hpp"
#include "gessa/mesh_io.hpp"
#include "gessa/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <set>

namespace gessa {

std::vector<std::vector<LandmarkDistance>> nearest_landmarks(const TriangleMesh& mesh,
                                                             const std::vector<SurfacePoint>& landmarks, int k) {
  const int nv = mesh.num_vertices(), m = static_cast<int>(landmarks.size());
  const int want = std::min(k, m);
  std::vector<std::vector<LandmarkDistance>> out(nv);
  if (want <= 0) return out;

  const int threads = resolve_threads(0);
  std::vector<std::unique_ptr<GeodesicEngine>> engines;
  for (int t = 0; t < threads; ++t) engines.push_back(std::make_unique<GeodesicEngine>(mesh));

  double radius = 2.5 * std::sqrt(want * mesh.total_area() / m);
  for (;;) {
    std::vector<std::vector<std::pair<int, double>>> reached(m);
    parallel_for(m, threads, [&](int l, int worker) {
      GeodesicEngine& engine = *engines[worker];
      engine.propagate(landmarks[l], radius);
      for (int v = 0; v < nv; ++v) {
        const double d = engine.vertex_distance(v);
        if (d <= radius) reached[l].push_back({v, d});
      }
    });
    for (auto& list : out) list.clear();
    for (int l = 0; l < m; ++l)
      for (const auto& [v, d] : reached[l]) out[v].push_back({l, d});
    bool complete = true;
    for (auto& list : out) {
      std::sort(list.begin(), list.end(), [](const LandmarkDistance& a, const LandmarkDistance& b) {
        return a.distance < b.distance || (a.distance == b.distance && a.landmark < b.landmark);
      });
      if (static_cast<int>(list.size()) > want) list.resize(want);
      if (static_cast<int>(list.size()) < want) complete = false;
    }
    if (complete || !std::isfinite(radius)) break;
    radius *= 2.0;
    if (radius > 4.0 * mesh.bbox_diagonal()) radius = kInf;
  }
  return out;
}

std::vector<double> interpolate_scalars(const TriangleMesh& mesh, const std::vector<SurfacePoint>& landmarks,
                                        const std::vector<std::optional<double>>& values, int k) {
  if (values.size() != landmarks.size()) throw Error("one scalar per landmark required");
  std::vector<SurfacePoint> defined;
  std::vector<double> defined_values;
  for (size_t l = 0; l < landmarks.size(); ++l)
    if (values[l] && std::isfinite(*values[l])) {
      defined.push_back(landmarks[l]);
      defined_values.push_back(*values[l]);
    }
  std::vector<double> out(mesh.num_vertices(), kUndefinedQuality);
  const auto near = nearest_landmarks(mesh, defined, k);
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const auto& list = near[v];
    if (list.empty()) continue;
    if (list[0].distance <= 1e-12 * mesh.bbox_diagonal()) {
      out[v] = defined_values[list[0].landmark];
      continue;
    }
    double num = 0.0, den = 0.0;
    for (const auto& n : list) {
      num += defined_values[n.landmark] / n.distance;
      den += 1.0 / n.distance;
    }
    out[v] = num / den;
  }
  return out;
}

void export_map(const std::filesystem::path& ply, const std::filesystem::path& csv_path, const TriangleMesh& mesh,
                const std::vector<SurfacePoint>& landmarks, const std::vector<std::optional<double>>& values,
                const std::string& title) {
  MeshWriteOptions opt;
  opt.vertex_quality = interpolate_scalars(mesh, landmarks, values, 3);
  if (!title.empty()) opt.comments.push_back(title);
  opt.comments.push_back("undefined quality " + csv::format_double(kUndefinedQuality));
  save_mesh(ply, mesh, MeshFormat::Ply, opt);

  std::ofstream out(csv_path);
  if (!out) throw Error("cannot write '" + csv_path.string() + "'");
  out << "landmark_id,value\n";
  for (size_t l = 0; l < values.size(); ++l) out << l << ',' << csv::format_optional(values[l]) << '\n';
}

AverageShape compute_average_shape(const LandmarkEnsemble& ensemble) {
  ensemble.check();
  const int m = ensemble.num_landmarks();
  AverageShape out;
  const Eigen::RowVectorXd mean = ensemble.mean_shape();
  for (int k = 0; k < m; ++k) out.landmarks.push_back(mean.segment<3>(3 * k).transpose());

  const TriangleMesh& first = ensemble.meshes[0];
  const auto cell = nearest_landmarks(first, ensemble.landmarks[0], 1);
  std::vector<Face> faces;
  std::set<std::array<int, 3>> seen;
  for (int f = 0; f < first.num_faces(); ++f) {
    Face t;
    bool ok = true;
    for (int i = 0; i < 3; ++i) {
      const auto& list = cell[first.face(f)[i]];
      if (list.empty()) {
        ok = false;
        break;
      }
      t[i] = list[0].landmark;
    }
    if (!ok || t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
    std::array<int, 3> key{t[0], t[1], t[2]};
    std::sort(key.begin(), key.end());
    if (seen.insert(key).second) faces.push_back(t);
  }
  out.mesh = TriangleMesh(out.landmarks, faces);
  return out;
}

std::vector<GroundTruthLandmark> read_ground_truth(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  const int cs = t.column("subject_id"), cn = t.column("name"), cx = t.column("x"), cy = t.column("y"),
            cz = t.column("z");
  std::vector<GroundTruthLandmark> out;
  for (const auto& row : t.rows)
    out.push_back({row[cs], row[cn], Vec3(csv::parse_double(row[cx]), csv::parse_double(row[cy]), csv::parse_double(row[cz]))});
  return out;
}

void write_ground_truth(const std::filesystem::path& path, const std::vector<GroundTruthLandmark>& gtl) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "subject_id,name,x,y,z\n";
  for (const auto& g : gtl)
    out << csv::join({g.subject_id, g.name, csv::format_double(g.position.x()), csv::format_double(g.position.y()),
                      csv::format_double(g.position.z())})
        << '\n';
}

ValidationReport validate_landmarks(const LandmarkEnsemble& ensemble, const std::vector<GroundTruthLandmark>& gtl,
                                    const std::string& width_a, const std::string& width_b) {
  ensemble.check();
  std::map<std::string, int> subject;
  for (int j = 0; j < ensemble.num_surfaces(); ++j) subject[ensemble.meshes.ids[j]] = j;

  ValidationReport report;
  std::vector<std::string> names;
  std::map<std::string, std::vector<double>> dist;
  std::map<std::string, std::map<std::string, Vec3>> by_subject;
  for (const auto& g : gtl) {
    auto it = subject.find(g.subject_id);
    if (it == subject.end()) {
      report.notes.push_back("subject '" + g.subject_id + "' has no landmarks; skipped for " + g.name);
      continue;
    }
    if (!dist.count(g.name)) names.push_back(g.name);
    double best = kInf;
    for (const auto& p : ensemble.landmarks[it->second]) best = std::min(best, (p.position - g.position).norm());
    dist[g.name].push_back(best);
    by_subject[g.subject_id][g.name] = g.position;
  }

  double width = 0.0;
  int pairs = 0;
  for (const auto& [id, pts] : by_subject) {
    auto a = pts.find(width_a), b = pts.find(width_b);
    if (a == pts.end() || b == pts.end()) continue;
    width += (a->second - b->second).norm();
    ++pairs;
  }
  if (pairs == 0) throw Error("no subject has both reference landmarks '" + width_a + "' and '" + width_b + "'");
  report.width = width / pairs;
  if (!(report.width > 0.0)) throw Error("reference width is zero");

  for (const auto& name : names) {
    const auto& d = dist[name];
    ValidationRow row;
    row.name = name;
    row.subjects = static_cast<int>(d.size());
    for (double x : d) row.mean += x;
    row.mean /= row.subjects;
    if (row.subjects > 1) {
      for (double x : d) row.sd += (x - row.mean) * (x - row.mean);
      row.sd = std::sqrt(row.sd / (row.subjects - 1));
    }
    row.mean_normalized = row.mean / report.width;
    row.sd_normalized = row.sd / report.width;
    report.rows.push_back(row);
  }
  for (const auto& r : report.rows) {
    report.overall_mean += r.mean / report.rows.size();
    report.overall_sd += r.sd / report.rows.size();
  }
  report.overall_mean_normalized = report.overall_mean / report.width;
  report.overall_sd_normalized = report.overall_sd / report.width;
  return report;
}

void write_validation_report(const std::filesystem::path& path, const ValidationReport& report) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "name,subjects,mean,sd,mean_normalized,sd_normalized\n";
  auto line = [&](const std::string& name, int n, double m, double s, double mn, double sn) {
    out << csv::join({name, std::to_string(n), csv::format_double(m), csv::format_double(s), csv::format_double(mn),
                      csv::format_double(sn)})
        << '\n';
  };
  for (const auto& r : report.rows) line(r.name, r.subjects, r.mean, r.sd, r.mean_normalized, r.sd_normalized);
  line("overall", static_cast<int>(report.rows.size()), report.overall_mean, report.overall_sd,
       report.overall_mean_normalized, report.overall_sd_normalized);
}

}  // namespace gessa
