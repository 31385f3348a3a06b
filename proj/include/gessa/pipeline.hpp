#pragma once

#include "gessa/curvature.hpp"
#include "gessa/sampling.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gessa {

/// Bad or missing configuration. Maps to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A stage failed after the configuration was accepted. Maps to exit code 3.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message)
      : Error("stage '" + stage + "' failed: " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct PipelineConfig {
  std::filesystem::path input_dir;
  std::filesystem::path output_dir = "gessa_out";
  std::filesystem::path registry;
  std::filesystem::path distance_defs;
  std::filesystem::path gtl;
  std::string width_pair;  // "a,b": ground-truth names spanning the reference width

  bool align = true;
  std::string align_reference;  // subject id; empty = first
  int icp_iters = 100;

  OptimizerConfig sampling;

  std::vector<CurvatureKind> curvature_kinds{CurvatureKind::MC, CurvatureKind::GC, CurvatureKind::CU, CurvatureKind::SI};
  bool si_literal_constant = false;
  std::map<CurvatureKind, double> sparsity{
      {CurvatureKind::MC, 15.0}, {CurvatureKind::GC, 7.5}, {CurvatureKind::CU, 15.0}, {CurvatureKind::SI, 12.5}};
  int components = 5;
  bool residualize_age = true;
  double max_missing = 0.05;

  /// Sets one key. Throws ConfigError on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Every key with its current value, in a fixed order.
  std::vector<std::pair<std::string, std::string>> entries() const;
  /// Checks ranges and that input paths exist when `need_input` is set.
  void check(bool need_input) const;

  static std::vector<std::string> keys();
};

/// Plain `key = value` lines; `#` starts a comment.
PipelineConfig read_config(const std::filesystem::path& path);
void apply_config_file(PipelineConfig& config, const std::filesystem::path& path);

struct StageRecord {
  std::string name;
  std::string status;  // completed or failed
  double seconds = 0.0;
  std::vector<std::string> outputs;
  std::string error;
};

/// Runs named stages in order and writes manifest.json after each one. A
/// failure is recorded, the manifest written, and StageError thrown.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);

  void align();
  void sample();
  void curvature();
  void traits();
  void heritability();
  void map();
  void validate();
  /// align, sample, curvature, traits, heritability.
  void run();

  const std::vector<StageRecord>& stages() const { return stages_; }
  const PipelineConfig& config() const { return config_; }
  std::filesystem::path out(const std::string& name) const { return config_.output_dir / name; }

 private:
  void stage(const std::string& name, const std::function<std::vector<std::string>()>& body);
  void write_manifest() const;
  MeshEnsemble aligned_meshes() const;
  LandmarkEnsemble landmarks() const;

  PipelineConfig config_;
  std::vector<StageRecord> stages_;
};

/// Version string written into manifests.
const char* version();

}  // namespace gessa
