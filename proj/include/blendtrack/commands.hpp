#pragma once

#include "blendtrack/face_mesh.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace blendtrack {

// Every command writes a JSON document ("schema": "btrk/1") to its output
// location and returns it together with a one-line human summary.
struct CommandOutput {
  std::string json;
  std::string summary;
};

struct SynthCommand {
  std::size_t subjects = 2;
  std::size_t clips_per_location = 1;
  std::uint64_t seed = 0;
  double duration_s = 120.0;
  std::int64_t clock_offset_ms = 400;
  std::size_t image_size = 64;
  double invalid_fraction = 0.02;
  std::filesystem::path out_dir;  // dataset root; synth.json is written there
};

struct SyncCommand {
  std::filesystem::path data_dir;
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
};

struct MeshOptions {
  std::optional<std::filesystem::path> mesh;  // built-in reference mesh when unset
  double icd_mm = kDefaultIcdMm;
};

struct TrainCommand {
  std::filesystem::path data_dir;
  std::optional<std::filesystem::path> config;
  std::string test_subject;
  std::filesystem::path out_dir;  // model.btrk and run_manifest.json
  MeshOptions mesh;
};

struct CalibrateCommand {
  std::filesystem::path model;
  std::filesystem::path data_dir;
  std::optional<std::filesystem::path> config;
  std::string test_subject;
  std::filesystem::path out_dir;
  MeshOptions mesh;
};

struct CurveCommand {
  std::filesystem::path model;
  std::filesystem::path data_dir;
  std::optional<std::filesystem::path> config;
  std::string test_subject;
  std::vector<double> fractions{0.05, 0.1, 0.25, 0.5, 1.0};
  std::filesystem::path out;
  MeshOptions mesh;
};

struct EvalCommand {
  std::filesystem::path model;
  std::filesystem::path data_dir;
  std::optional<std::filesystem::path> config;
  std::optional<std::string> test_subject;  // all clips when unset
  std::filesystem::path out;
  MeshOptions mesh;
};

struct BenchCommand {
  std::optional<std::filesystem::path> model;  // freshly initialized model when unset
  std::size_t image_size = 64;
  std::size_t pairs = 400;
  std::uint64_t seed = 0;
  std::filesystem::path out;
};

inline constexpr const char* kModelFileName = "model.btrk";
inline constexpr const char* kRunManifestName = "run_manifest.json";

CommandOutput run_synth(const SynthCommand& cmd);
CommandOutput run_sync(const SyncCommand& cmd);
CommandOutput run_train(const TrainCommand& cmd);
CommandOutput run_calibrate(const CalibrateCommand& cmd);
CommandOutput run_curve(const CurveCommand& cmd);
CommandOutput run_eval(const EvalCommand& cmd);
CommandOutput run_bench(const BenchCommand& cmd);

}  // namespace blendtrack
