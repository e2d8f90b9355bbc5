#include "tbs/dataset_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "tbs/error.hpp"

namespace tbs {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "raw image files are little-endian");

namespace {

std::string slice_stem(const std::string& patient_id, int slice_index) {
  std::ostringstream s;
  s << patient_id << "_s" << slice_index;
  return s.str();
}

std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

json phantom_to_json(const PhantomConfig& c) {
  return {{"image_size", c.image_size},
          {"n_vertices", c.n_vertices},
          {"class_priors", c.class_priors},
          {"band_count_range", {c.band_count_min, c.band_count_max}},
          {"min_band_degrees", c.min_band_degrees},
          {"radius_base", c.radius_base},
          {"radius_harmonics", c.radius_harmonics},
          {"harmonic_amplitude", c.harmonic_amplitude},
          {"noise_sigma", c.noise_sigma},
          {"illumination_slope", c.illumination_slope},
          {"mvi_threshold", c.mvi_threshold},
          {"mvi_flip_prob", c.mvi_flip_prob},
          {"seed", c.seed}};
}

PhantomConfig phantom_from_json(const json& j) {
  PhantomConfig c;
  c.image_size = j.at("image_size").get<int>();
  c.n_vertices = j.at("n_vertices").get<int>();
  c.class_priors = j.at("class_priors").get<std::array<double, kNumClasses>>();
  c.band_count_min = j.at("band_count_range").at(0).get<int>();
  c.band_count_max = j.at("band_count_range").at(1).get<int>();
  c.min_band_degrees = j.at("min_band_degrees").get<double>();
  c.radius_base = j.at("radius_base").get<double>();
  c.radius_harmonics = j.at("radius_harmonics").get<int>();
  c.harmonic_amplitude = j.at("harmonic_amplitude").get<double>();
  c.noise_sigma = j.at("noise_sigma").get<double>();
  c.illumination_slope = j.at("illumination_slope").get<double>();
  c.mvi_threshold = j.at("mvi_threshold").get<double>();
  c.mvi_flip_prob = j.at("mvi_flip_prob").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

// Row-major flat copy of a matrix.
std::vector<double> flatten(const Eigen::MatrixXd& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  return out;
}

Eigen::MatrixXd unflatten(const std::vector<double>& v, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (static_cast<Eigen::Index>(v.size()) != rows * cols)
    throw DataError(std::string("checkpoint tensor ") + name + " has the wrong length");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = v[static_cast<std::size_t>(r * cols + c)];
  return m;
}

void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw DataError("missing file " + p.string());
}

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + s + "'");
}

SplitCounts split_counts(std::size_t n, const SplitSpec& spec) {
  const double sum = spec.train + spec.val + spec.test;
  if (spec.train < 0 || spec.val < 0 || spec.test < 0 || std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must be nonnegative and sum to 1");
  SplitCounts c;
  c.train = std::min(n, static_cast<std::size_t>(std::llround(spec.train * static_cast<double>(n))));
  c.val = std::min(n - c.train, static_cast<std::size_t>(std::llround(spec.val * static_cast<double>(n))));
  c.test = n - c.train - c.val;
  return c;
}

void write_bytes_atomic(std::span<const char> bytes, const fs::path& path) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw DataError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void write_text_atomic(const std::string& text, const fs::path& path) {
  write_bytes_atomic(std::span<const char>(text.data(), text.size()), path);
}

void write_json_atomic(const json& j, const fs::path& path) { write_text_atomic(j.dump(2) + "\n", path); }

json read_json(const fs::path& path) {
  require_file(path);
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void check_format_version(const json& j, const fs::path& source) {
  if (!j.contains("format_version") || !j["format_version"].is_string())
    throw DataError(source.string() + ": missing format_version");
  const auto v = j["format_version"].get<std::string>();
  if (v.substr(0, v.find('.')) != "1") throw DataError(source.string() + ": unsupported format_version " + v);
}

json manifest_to_json(const Manifest& m) {
  json slices = json::array();
  for (const auto& s : m.slices) {
    slices.push_back({{"patient_id", s.patient_id},
                      {"slice_index", s.slice_index},
                      {"split", split_name(s.split)},
                      {"image", s.image_path},
                      {"mask", s.mask_path},
                      {"width", s.width},
                      {"height", s.height},
                      {"n_vertices", static_cast<int>(s.labels.size())},
                      {"labels", s.labels},
                      {"bands", {{"starts", s.bands.starts}, {"classes", s.bands.classes}}}});
  }
  json patients = json::array();
  for (const auto& p : m.patients) patients.push_back({{"patient_id", p.patient_id}, {"mvi", p.mvi_label}});
  return {{"format_version", m.format_version},
          {"phantom", phantom_to_json(m.phantom)},
          {"n_vertices", m.n_vertices},
          {"slices", slices},
          {"patients", patients}};
}

Manifest manifest_from_json(const json& j) {
  Manifest m;
  try {
    m.format_version = j.at("format_version").get<std::string>();
    m.phantom = phantom_from_json(j.at("phantom"));
    m.n_vertices = j.at("n_vertices").get<int>();
    for (const auto& s : j.at("slices")) {
      SliceEntry e;
      e.patient_id = s.at("patient_id").get<std::string>();
      e.slice_index = s.at("slice_index").get<int>();
      e.split = parse_split(s.at("split").get<std::string>());
      e.image_path = s.at("image").get<std::string>();
      e.mask_path = s.at("mask").get<std::string>();
      e.width = s.at("width").get<int>();
      e.height = s.at("height").get<int>();
      e.labels = s.at("labels").get<LabelSequence>();
      e.bands.starts = s.at("bands").at("starts").get<std::vector<double>>();
      e.bands.classes = s.at("bands").at("classes").get<std::vector<int>>();
      if (static_cast<int>(e.labels.size()) != m.n_vertices)
        throw DataError("slice " + e.patient_id + " has a label sequence of the wrong length");
      m.slices.push_back(std::move(e));
    }
    for (const auto& p : j.at("patients"))
      m.patients.push_back({p.at("patient_id").get<std::string>(), p.at("mvi").get<int>()});
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void write_manifest(const Manifest& m, const fs::path& path) { write_json_atomic(manifest_to_json(m), path); }

Manifest read_manifest(const fs::path& path) {
  const json j = read_json(path);
  check_format_version(j, path);
  return manifest_from_json(j);
}

fs::path write_dataset(std::span<const PatientRecord> records, const SplitSpec& split, const fs::path& out_dir,
                       const PhantomConfig& cfg) {
  std::size_t n = 0;
  for (const auto& r : records) n += r.slices.size();
  if (n == 0) throw std::invalid_argument("empty dataset");
  const SplitCounts counts = split_counts(n, split);

  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec) throw DataError("cannot create " + (out_dir / "images").string() + ": " + ec.message());
  fs::create_directories(out_dir / "masks", ec);
  if (ec) throw DataError("cannot create " + (out_dir / "masks").string() + ": " + ec.message());

  Manifest m;
  m.phantom = cfg;
  m.n_vertices = -1;
  std::size_t flat = 0;
  for (const auto& rec : records) {
    m.patients.push_back({rec.patient_id, rec.mvi_label});
    for (const auto& s : rec.slices) {
      SliceEntry e;
      e.patient_id = rec.patient_id;
      e.slice_index = s.slice_index;
      e.split = flat < counts.train ? Split::train : flat < counts.train + counts.val ? Split::val : Split::test;
      const std::string stem = slice_stem(rec.patient_id, s.slice_index);
      e.image_path = "images/" + stem + ".f32";
      e.mask_path = "masks/" + stem + ".u8";
      e.width = s.image.width();
      e.height = s.image.height();
      e.labels = s.gt_label_sequence;
      e.bands = s.gt_angle_labels;
      if (m.n_vertices < 0) m.n_vertices = static_cast<int>(e.labels.size());
      if (static_cast<int>(e.labels.size()) != m.n_vertices)
        throw std::invalid_argument("label sequences must share one length");

      const auto img = s.image.values();
      write_bytes_atomic(std::span<const char>(reinterpret_cast<const char*>(img.data()), img.size_bytes()),
                         out_dir / e.image_path);
      const auto msk = s.mask.values();
      write_bytes_atomic(std::span<const char>(reinterpret_cast<const char*>(msk.data()), msk.size_bytes()),
                         out_dir / e.mask_path);
      m.slices.push_back(std::move(e));
      ++flat;
    }
  }
  const fs::path manifest = out_dir / "manifest.json";
  write_manifest(m, manifest);
  return manifest;
}

std::vector<PhantomSlice> Dataset::slices(Split split) const {
  std::vector<PhantomSlice> out;
  std::size_t flat = 0;
  for (const auto& p : patients) {
    for (const auto& s : p.slices) {
      if (manifest.slices[flat].split == split) out.push_back(s);
      ++flat;
    }
  }
  return out;
}

std::vector<PhantomSlice> Dataset::all_slices() const {
  std::vector<PhantomSlice> out;
  for (const auto& p : patients) out.insert(out.end(), p.slices.begin(), p.slices.end());
  return out;
}

Dataset load_dataset(const fs::path& path) {
  Dataset d;
  const fs::path manifest_path = fs::is_directory(path) ? path / "manifest.json" : path;
  d.root = manifest_path.parent_path();
  d.manifest = read_manifest(manifest_path);

  std::map<std::string, std::size_t> index;
  for (const auto& p : d.manifest.patients) {
    index[p.patient_id] = d.patients.size();
    d.patients.push_back({p.patient_id, {}, p.mvi_label});
  }
  std::string last_patient;
  for (const auto& e : d.manifest.slices) {
    const auto it = index.find(e.patient_id);
    if (it == index.end()) throw DataError("slice refers to unknown patient " + e.patient_id);
    // Slices must be grouped patient-major, matching write_dataset.
    if (e.patient_id != last_patient && !d.patients[it->second].slices.empty())
      throw DataError("manifest slices are not grouped by patient");
    last_patient = e.patient_id;

    PhantomSlice s;
    s.patient_id = e.patient_id;
    s.slice_index = e.slice_index;
    s.gt_label_sequence = e.labels;
    s.gt_angle_labels = e.bands;
    const auto pixels = static_cast<std::size_t>(e.width) * static_cast<std::size_t>(e.height);
    const auto img = read_bytes(d.root / e.image_path);
    if (img.size() != pixels * sizeof(float)) throw DataError("wrong size: " + (d.root / e.image_path).string());
    s.image = GrayImage(e.width, e.height);
    std::memcpy(s.image.values().data(), img.data(), img.size());
    const auto msk = read_bytes(d.root / e.mask_path);
    if (msk.size() != pixels) throw DataError("wrong size: " + (d.root / e.mask_path).string());
    s.mask = BinaryMask(e.width, e.height);
    std::memcpy(s.mask.values().data(), msk.data(), msk.size());
    for (auto& b : s.mask.values())
      if (b > 1) throw DataError("mask values must be 0 or 1: " + (d.root / e.mask_path).string());
    d.patients[it->second].slices.push_back(std::move(s));
  }
  return d;
}

void write_checkpoint(const Checkpoint& c, const fs::path& path) {
  const auto& p = c.params;
  json j = {{"format_version", kFormatVersion},
            {"dims",
             {{"D", p.input_dim()},
              {"Hd", p.hidden_dim()},
              {"K", p.classes()},
              {"N", c.pipeline.n_vertices},
              {"C", p.input_dim() - kCoordChannels}}},
            {"w1", flatten(p.w1)},
            {"b1", flatten(p.b1)},
            {"w2", flatten(p.w2)},
            {"b2", flatten(p.b2)},
            {"features", {{"pyramid", c.pipeline.features.use_pyramid}, {"coords", c.pipeline.features.use_coords}}},
            {"training",
             {{"lr", c.sgd.lr},
              {"momentum", c.sgd.momentum},
              {"weight_decay", c.sgd.weight_decay},
              {"batch_size", c.sgd.batch_size},
              {"epochs", c.sgd.epochs},
              {"seed", c.seed}}},
            {"best_epoch", c.best_epoch}};
  write_json_atomic(j, path);
}

Checkpoint read_checkpoint(const fs::path& path) {
  const json j = read_json(path);
  check_format_version(j, path);
  Checkpoint c;
  try {
    const auto& dims = j.at("dims");
    const int d = dims.at("D").get<int>();
    const int hd = dims.at("Hd").get<int>();
    const int k = dims.at("K").get<int>();
    if (d != kMergedChannels + kCoordChannels || dims.at("C").get<int>() != kMergedChannels)
      throw DataError(path.string() + ": feature dimension does not match this build");
    if (k != kNumClasses) throw DataError(path.string() + ": class count does not match this build");
    c.params.w1 = unflatten(j.at("w1").get<std::vector<double>>(), d, hd, "w1");
    c.params.b1 = unflatten(j.at("b1").get<std::vector<double>>(), hd, 1, "b1");
    c.params.w2 = unflatten(j.at("w2").get<std::vector<double>>(), hd, k, "w2");
    c.params.b2 = unflatten(j.at("b2").get<std::vector<double>>(), k, 1, "b2");
    c.pipeline.n_vertices = dims.at("N").get<int>();
    c.pipeline.hidden = hd;
    c.pipeline.features.use_pyramid = j.at("features").at("pyramid").get<bool>();
    c.pipeline.features.use_coords = j.at("features").at("coords").get<bool>();
    const auto& t = j.at("training");
    c.sgd.lr = t.at("lr").get<double>();
    c.sgd.momentum = t.at("momentum").get<double>();
    c.sgd.weight_decay = t.at("weight_decay").get<double>();
    c.sgd.batch_size = t.at("batch_size").get<int>();
    c.sgd.epochs = t.at("epochs").get<int>();
    c.seed = t.at("seed").get<std::uint64_t>();
    c.best_epoch = j.at("best_epoch").get<int>();
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": malformed checkpoint: " + e.what());
  }
  if (!c.params.all_finite()) throw DataError(path.string() + ": non-finite weights");
  return c;
}

void write_history(const TrainHistory& history, const fs::path& path, bool include_timing) {
  std::string text;
  for (const auto& e : history.epochs) {
    json j = {{"epoch", e.epoch},
              {"train_loss", e.train_loss},
              {"val_loss", e.val_loss},
              {"val_macro_f1", e.val_macro_f1},
              {"seed", e.seed}};
    if (include_timing) j["wall_seconds"] = e.wall_seconds;
    text += j.dump() + "\n";
  }
  write_text_atomic(text, path);
}

}  // namespace tbs
