#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "mvi/dataset.hpp"
#include "mvi/train.hpp"

namespace mvi::exp {

inline constexpr const char* kVersion = "mvi 0.1.0";
// Overrides the default dataset cache location (<output_dir>/datasets).
inline constexpr const char* kCacheEnvVar = "MVI_DATA_ROOT";

// Config validation failure; path names the offending field.
struct SchemaError : std::runtime_error {
  std::string field_path;
  SchemaError(std::string path, const std::string& msg)
      : std::runtime_error(path + ": " + msg), field_path(std::move(path)) {}
};

// Builds (or loads from cache) the dataset a config section describes.
data::TwoViewData build_dataset(const nlohmann::json& dcfg,
                                const std::string& cache_root);

struct RunOptions {
  std::string output_dir;  // overrides config output_dir when non-empty
  std::optional<uint64_t> seed;
  std::optional<int> folds;
  bool resume = true;
};

// End-to-end experiment: datasets, cross-validation per configured run,
// requested metrics and CKA matrices, manifest. Returns the output
// directory. Throws SchemaError on config violations.
std::string run_experiment(const std::string& config_path,
                           const RunOptions& options);

// Aggregated CSV tables (per-metric mean/std, side-by-side comparison,
// lambda sweep series, CKA grids) from a completed results directory.
void emit_report(const std::string& results_dir);

// Rebuilds the models stored in a cross-validation checkpoint.
struct LoadedModels {
  std::optional<train::ClassifierModel> single;  // upsl / mpsl
  std::optional<train::PxlModelPair> pxl;
  nlohmann::json config;

  // The encoder for sub-model 'a'/'b' ('a' for single models).
  nn::Encoder& encoder(char sub);
  // The view this (sub-)model was trained on.
  char trained_view(char sub) const;
};
LoadedModels load_models(const std::string& checkpoint_path, int class_count);

}  // namespace mvi::exp
