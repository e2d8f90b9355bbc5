#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tbs/image.hpp"
#include "tbs/labels.hpp"

namespace tbs {

/// Synthetic star-shaped tumour slices whose rim texture encodes the boundary class:
///   class 0: continuous bright rim
///   class 1: fainter rim broken by narrow periodic gaps
///   class 2: rim mostly absent, short faint fragments only
/// A smooth left-to-right illumination gradient is applied to the whole slice, so the
/// same class appears brighter toward the right edge.
struct PhantomConfig {
  int image_size = 64;
  int n_vertices = 90;
  std::array<double, kNumClasses> class_priors{0.70, 0.15, 0.15};
  int band_count_min = 3;
  int band_count_max = 8;
  double min_band_degrees = 12.0;
  double radius_base = 18.0;
  int radius_harmonics = 3;
  double harmonic_amplitude = 0.06;  // per harmonic, relative to radius_base
  double noise_sigma = 0.05;
  double illumination_slope = 0.15;
  double mvi_threshold = 0.30;
  double mvi_flip_prob = 0.05;
  std::uint64_t seed = 0;

  /// Copy with every field forced into its valid range.
  PhantomConfig clamped() const;
  bool operator==(const PhantomConfig&) const = default;
};

/// Piecewise-constant angle -> class table. Band i covers [starts[i], starts[i+1]),
/// the last band wraps around to starts[0] + 360.
struct AngleLabelTable {
  std::vector<double> starts;
  std::vector<int> classes;

  int label_at(double theta_degrees) const;
  bool operator==(const AngleLabelTable&) const = default;
};

/// Labels at the N ray angles k * 360 / N.
LabelSequence labels_at_rays(const AngleLabelTable& table, int n_rays);

struct PhantomSlice {
  GrayImage image;
  BinaryMask mask;
  AngleLabelTable gt_angle_labels;
  LabelSequence gt_label_sequence;
  std::string patient_id;
  int slice_index = 0;

  bool operator==(const PhantomSlice&) const = default;
};

struct PatientRecord {
  std::string patient_id;
  std::vector<PhantomSlice> slices;
  int mvi_label = 0;

  bool operator==(const PatientRecord&) const = default;
};

struct SliceCountRange {
  int min = 1;
  int max = 1;
};

PhantomSlice generate_slice(const PhantomConfig& cfg, std::uint64_t patient_seed, int slice_index);

/// Slice counts per patient drawn from `range`.
std::vector<PatientRecord> generate_cohort(const PhantomConfig& cfg, int n_patients, SliceCountRange range);

/// Explicit slice count for each patient. Slices are generated in parallel.
std::vector<PatientRecord> generate_cohort(const PhantomConfig& cfg, std::span<const int> slices_per_patient);

/// Serial reference for the parallel cohort generator.
std::vector<PatientRecord> generate_cohort_serial(const PhantomConfig& cfg, std::span<const int> slices_per_patient);

/// Fraction of ground-truth vertices in classes 1 and 2 across all of a patient's slices.
double capsule_disruption_ratio(const PatientRecord& patient);

std::string patient_name(int index);

}  // namespace tbs
