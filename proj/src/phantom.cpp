#include "tbs/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "tbs/geometry.hpp"
#include "tbs/rng.hpp"

namespace tbs {

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kTagSlice = 0x51;
constexpr std::uint64_t kTagPatient = 0x52;
constexpr std::uint64_t kTagSliceCount = 0x53;
constexpr std::uint64_t kTagMvi = 0x54;

constexpr double kTumorLevel = 0.30;
constexpr double kLiverLevel = 0.50;
constexpr double kRimHalfWidth = 2.5;

struct RimStyle {
  double level;
  double period;  // pixels of arc length
  double duty;    // fraction of each period where the rim is drawn
};

constexpr std::array<RimStyle, kNumClasses> kRimStyles{{
    {1.00, 1.0, 1.0},
    {0.80, 8.0, 0.75},
    {0.60, 12.0, 0.15},
}};

int draw_class(const std::array<double, kNumClasses>& priors, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    acc += priors[static_cast<std::size_t>(c)];
    if (u < acc) return c;
  }
  for (int c = kNumClasses - 1; c >= 0; --c)
    if (priors[static_cast<std::size_t>(c)] > 0.0) return c;
  return 0;
}

AngleLabelTable draw_bands(const PhantomConfig& cfg, Rng& rng) {
  const int n = uniform_int(rng, cfg.band_count_min, cfg.band_count_max);
  // Band widths: a fixed minimum plus a uniform spacing of the remainder.
  const double spare = 360.0 - n * cfg.min_band_degrees;
  std::vector<double> cuts(static_cast<std::size_t>(n - 1));
  for (double& c : cuts) c = uniform01(rng) * spare;
  std::sort(cuts.begin(), cuts.end());
  const double offset = uniform(rng, 0.0, 360.0);

  AngleLabelTable t;
  double prev = 0.0;
  for (int i = 0; i < n; ++i) {
    const double start = prev + i * cfg.min_band_degrees;
    t.starts.push_back(std::fmod(start + offset, 360.0));
    t.classes.push_back(draw_class(cfg.class_priors, rng));
    if (i < n - 1) prev = cuts[static_cast<std::size_t>(i)];
  }
  // Rotate so starts are ascending.
  const auto first = std::min_element(t.starts.begin(), t.starts.end()) - t.starts.begin();
  std::rotate(t.starts.begin(), t.starts.begin() + first, t.starts.end());
  std::rotate(t.classes.begin(), t.classes.begin() + first, t.classes.end());
  return t;
}

double rim_level(int cls, double arc_position) {
  const RimStyle& s = kRimStyles[static_cast<std::size_t>(cls)];
  const double phase = std::fmod(arc_position, s.period);
  return phase < s.duty * s.period ? s.level : -1.0;
}

}  // namespace

PhantomConfig PhantomConfig::clamped() const {
  PhantomConfig c = *this;
  c.image_size = std::max(c.image_size, 32);
  c.n_vertices = std::max(c.n_vertices, kMinRays);
  double sum = 0.0;
  for (double& p : c.class_priors) {
    p = std::isfinite(p) ? std::max(p, 0.0) : 0.0;
    sum += p;
  }
  if (sum <= 0.0) {
    c.class_priors = {1.0, 0.0, 0.0};
  } else {
    for (double& p : c.class_priors) p /= sum;
  }
  c.band_count_min = std::max(c.band_count_min, 1);
  c.band_count_max = std::max(c.band_count_max, c.band_count_min);
  c.min_band_degrees = std::clamp(c.min_band_degrees, 0.0, 360.0 / c.band_count_max);
  c.radius_harmonics = std::clamp(c.radius_harmonics, 0, 8);
  // Keeps the radius function positive: the harmonic sum stays below 0.3 of the base radius.
  if (c.radius_harmonics > 0)
    c.harmonic_amplitude = std::clamp(c.harmonic_amplitude, 0.0, 0.3 / c.radius_harmonics);
  c.radius_base = std::clamp(c.radius_base, 6.0, 0.3 * c.image_size);
  c.noise_sigma = std::max(c.noise_sigma, 0.0);
  c.illumination_slope = std::clamp(c.illumination_slope, 0.0, 0.5);
  c.mvi_threshold = std::clamp(c.mvi_threshold, 0.0, 1.0);
  c.mvi_flip_prob = std::clamp(c.mvi_flip_prob, 0.0, 1.0);
  return c;
}

int AngleLabelTable::label_at(double theta) const {
  if (starts.empty()) throw std::logic_error("empty angle label table");
  theta = std::fmod(theta, 360.0);
  if (theta < 0.0) theta += 360.0;
  // Last band whose start is <= theta; angles before starts[0] belong to the wrapping band.
  const auto it = std::upper_bound(starts.begin(), starts.end(), theta);
  if (it == starts.begin()) return classes.back();
  return classes[static_cast<std::size_t>(it - starts.begin() - 1)];
}

LabelSequence labels_at_rays(const AngleLabelTable& table, int n_rays) {
  LabelSequence out(static_cast<std::size_t>(n_rays));
  const double delta = 360.0 / n_rays;
  for (int k = 0; k < n_rays; ++k) out[static_cast<std::size_t>(k)] = table.label_at(k * delta);
  return out;
}

std::string patient_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "P%04d", index);
  return buf;
}

PhantomSlice generate_slice(const PhantomConfig& config, std::uint64_t patient_seed, int slice_index) {
  const PhantomConfig cfg = config.clamped();
  Rng rng = make_rng(cfg.seed, {kTagSlice, patient_seed, static_cast<std::uint64_t>(slice_index)});
  const int n = cfg.image_size;
  const double jitter = n / 16.0;
  const double cx = (n - 1) / 2.0 + uniform(rng, -jitter, jitter);
  const double cy = (n - 1) / 2.0 + uniform(rng, -jitter, jitter);
  const double r0 = cfg.radius_base * uniform(rng, 0.85, 1.15);

  // Harmonics start at order 2 so the shape's centre of mass stays near (cx, cy).
  std::vector<double> amp(static_cast<std::size_t>(cfg.radius_harmonics));
  std::vector<double> phase(amp.size());
  for (std::size_t j = 0; j < amp.size(); ++j) {
    amp[j] = uniform(rng, -cfg.harmonic_amplitude, cfg.harmonic_amplitude);
    phase[j] = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  }
  auto radius = [&](double t) {
    double s = 1.0;
    for (std::size_t j = 0; j < amp.size(); ++j) s += amp[j] * std::cos(static_cast<double>(j + 2) * t + phase[j]);
    return r0 * s;
  };

  PhantomSlice slice;
  slice.slice_index = slice_index;
  slice.mask = BinaryMask(n, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double t = std::atan2(y - cy, x - cx);
      slice.mask(x, y) = std::hypot(x - cx, y - cy) < radius(t);
    }
  }

  slice.gt_angle_labels = draw_bands(cfg, rng);
  slice.gt_label_sequence = labels_at_rays(slice.gt_angle_labels, cfg.n_vertices);

  // Class bands are indexed by angle about the mask centroid, the pole every consumer uses.
  const Centroid pole = centroid(slice.mask);
  slice.image = GrayImage(n, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double t = std::atan2(y - cy, x - cx);
      const double d = std::hypot(x - cx, y - cy) - radius(t);
      double v = slice.mask(x, y) ? kTumorLevel : kLiverLevel;
      if (std::abs(d) <= kRimHalfWidth) {
        const PolarPoint q = to_polar({static_cast<double>(x), static_cast<double>(y)}, pole);
        const int cls = slice.gt_angle_labels.label_at(q.theta);
        const double arc = q.theta * std::numbers::pi / 180.0 * r0;
        const double rim = rim_level(cls, arc);
        if (rim >= 0.0) v = rim;
      }
      const double xn = 2.0 * x / (n - 1) - 1.0;
      v *= 1.0 + cfg.illumination_slope * xn;
      v += cfg.noise_sigma * standard_normal(rng);
      slice.image(x, y) = static_cast<float>(v);
    }
  }
  return slice;
}

double capsule_disruption_ratio(const PatientRecord& patient) {
  std::size_t disrupted = 0;
  std::size_t total = 0;
  for (const auto& s : patient.slices) {
    for (int l : s.gt_label_sequence) disrupted += (l == 1 || l == 2);
    total += s.gt_label_sequence.size();
  }
  if (total == 0) throw std::invalid_argument("patient has no labelled vertices");
  return static_cast<double>(disrupted) / static_cast<double>(total);
}

namespace {

std::uint64_t patient_seed_of(const PhantomConfig& cfg, int p) {
  return derive_seed(cfg.seed, {kTagPatient, static_cast<std::uint64_t>(p)});
}

std::vector<PatientRecord> assemble_patients(const PhantomConfig& cfg, std::span<const int> counts,
                                             std::vector<PhantomSlice> flat) {
  std::vector<PatientRecord> out;
  out.reserve(counts.size());
  std::size_t next = 0;
  for (std::size_t p = 0; p < counts.size(); ++p) {
    PatientRecord rec;
    rec.patient_id = patient_name(static_cast<int>(p));
    for (int s = 0; s < counts[p]; ++s) {
      flat[next].patient_id = rec.patient_id;
      rec.slices.push_back(std::move(flat[next++]));
    }
    rec.mvi_label = capsule_disruption_ratio(rec) > cfg.mvi_threshold ? 1 : 0;
    Rng rng = make_rng(cfg.seed, {kTagMvi, static_cast<std::uint64_t>(p)});
    if (uniform01(rng) < cfg.mvi_flip_prob) rec.mvi_label = 1 - rec.mvi_label;
    out.push_back(std::move(rec));
  }
  return out;
}

struct SliceKey {
  int patient;
  int slice;
};

std::vector<SliceKey> slice_keys(std::span<const int> counts) {
  if (counts.empty()) throw std::invalid_argument("n_patients must be at least 1");
  std::vector<SliceKey> keys;
  for (std::size_t p = 0; p < counts.size(); ++p) {
    if (counts[p] < 1) throw std::invalid_argument("every patient needs at least one slice");
    for (int s = 0; s < counts[p]; ++s) keys.push_back({static_cast<int>(p), s});
  }
  return keys;
}

}  // namespace

std::vector<PatientRecord> generate_cohort(const PhantomConfig& config, std::span<const int> counts) {
  const PhantomConfig cfg = config.clamped();
  const auto keys = slice_keys(counts);
  std::vector<PhantomSlice> flat(keys.size());
  const auto n = static_cast<std::ptrdiff_t>(keys.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& k = keys[static_cast<std::size_t>(i)];
    flat[static_cast<std::size_t>(i)] = generate_slice(cfg, patient_seed_of(cfg, k.patient), k.slice);
  }
  return assemble_patients(cfg, counts, std::move(flat));
}

std::vector<PatientRecord> generate_cohort_serial(const PhantomConfig& config, std::span<const int> counts) {
  const PhantomConfig cfg = config.clamped();
  const auto keys = slice_keys(counts);
  std::vector<PhantomSlice> flat;
  flat.reserve(keys.size());
  for (const auto& k : keys) flat.push_back(generate_slice(cfg, patient_seed_of(cfg, k.patient), k.slice));
  return assemble_patients(cfg, counts, std::move(flat));
}

std::vector<PatientRecord> generate_cohort(const PhantomConfig& config, int n_patients, SliceCountRange range) {
  if (n_patients < 1) throw std::invalid_argument("n_patients must be at least 1");
  if (range.min < 1 || range.max < range.min) throw std::invalid_argument("invalid slice count range");
  std::vector<int> counts(static_cast<std::size_t>(n_patients));
  for (int p = 0; p < n_patients; ++p) {
    Rng rng = make_rng(config.seed, {kTagSliceCount, static_cast<std::uint64_t>(p)});
    counts[static_cast<std::size_t>(p)] = uniform_int(rng, range.min, range.max);
  }
  return generate_cohort(config, counts);
}

}  // namespace tbs
