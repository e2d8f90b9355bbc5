#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tbs/phantom.hpp"
#include "tbs/training.hpp"

namespace tbs {

inline constexpr const char* kFormatVersion = "1.0";

enum class Split { train, val, test };

const char* split_name(Split s);
Split parse_split(const std::string& s);

/// Fractions of the slice count assigned to train / val / test, in patient-major order.
struct SplitSpec {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

/// train = round(f_train * n), val = round(f_val * n), test takes the rest.
SplitCounts split_counts(std::size_t n, const SplitSpec& spec);

struct SliceEntry {
  std::string patient_id;
  int slice_index = 0;
  Split split = Split::train;
  std::string image_path;  // relative to the manifest
  std::string mask_path;
  int width = 0;
  int height = 0;
  LabelSequence labels;
  AngleLabelTable bands;
};

struct PatientEntry {
  std::string patient_id;
  int mvi_label = 0;
};

struct Manifest {
  std::string format_version = kFormatVersion;
  PhantomConfig phantom;
  int n_vertices = 0;
  std::vector<SliceEntry> slices;
  std::vector<PatientEntry> patients;
};

struct Dataset {
  std::filesystem::path root;
  Manifest manifest;
  std::vector<PatientRecord> patients;

  std::vector<PhantomSlice> slices(Split split) const;
  std::vector<PhantomSlice> all_slices() const;
};

/// Writes images, masks and manifest.json under out_dir; returns the manifest path.
std::filesystem::path write_dataset(std::span<const PatientRecord> records, const SplitSpec& split,
                                    const std::filesystem::path& out_dir, const PhantomConfig& cfg);

nlohmann::json manifest_to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);
void write_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

/// Accepts the dataset directory or the manifest path.
Dataset load_dataset(const std::filesystem::path& path);

struct Checkpoint {
  MlpParams params;
  PipelineConfig pipeline;
  SgdConfig sgd;
  std::uint64_t seed = 0;
  int best_epoch = -1;
};

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// One JSON object per epoch and line. Wall time is left out unless requested, so
/// reruns stay byte-identical.
void write_history(const TrainHistory& history, const std::filesystem::path& path, bool include_timing);

/// Serializes with 2-space indentation and a trailing newline, via a temp file and rename.
void write_json_atomic(const nlohmann::json& j, const std::filesystem::path& path);
void write_text_atomic(const std::string& text, const std::filesystem::path& path);
void write_bytes_atomic(std::span<const char> bytes, const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

/// Rejects documents whose major format version is not 1.
void check_format_version(const nlohmann::json& j, const std::filesystem::path& source);

}  // namespace tbs
