#pragma once
// Paired audio/visual datasets: file formats (CSV and binary features,
// CSV labels, key=value manifests), validation, label encoding, epoch
// batching, per-dimension standardization, and a synthetic paired-modality
// generator used for end-to-end checks.
//
// Binary feature files: magic "AVFB", u16 version, u64 rows, u64 cols,
// rows*cols little-endian f64 in row-major order. CSV feature files carry
// one sample per line with no header; label files carry one integer id per
// line. Manifests are plain key=value text.

#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "avret/serialize.hpp"
#include "avret/tensor.hpp"

namespace avret {

enum class Modality { audio, visual };

inline const char* to_string(Modality m) { return m == Modality::audio ? "audio" : "visual"; }

struct FeatureMatrix {
  Modality modality = Modality::visual;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major
  std::string source = "synthetic";

  double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
};

struct LabelVector {
  std::vector<int> ids;
  int classes = 0;
  std::string source = "synthetic";
};

struct PairedDataset {
  FeatureMatrix visual;
  FeatureMatrix audio;
  LabelVector labels;
  std::string split = "train";

  std::size_t size() const { return labels.ids.size(); }
};

// ---------------------------------------------------------------------------
// Label encoding and tensor bridging.
// ---------------------------------------------------------------------------

inline std::vector<double> one_hot(int label, int classes) {
  if (classes < 1) throw std::invalid_argument("one_hot: classes must be positive");
  if (label < 0 || label >= classes)
    throw std::invalid_argument("one_hot: label " + std::to_string(label) +
                                " outside [0, " + std::to_string(classes) + ")");
  std::vector<double> row(static_cast<std::size_t>(classes), 0.0);
  row[static_cast<std::size_t>(label)] = 1.0;
  return row;
}

inline Tensor one_hot_matrix(const std::vector<int>& labels, int classes) {
  std::vector<double> data;
  data.reserve(labels.size() * static_cast<std::size_t>(classes));
  for (int y : labels) {
    auto row = one_hot(y, classes);
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor::from_data(labels.size(), static_cast<std::size_t>(classes), std::move(data));
}

inline Tensor to_tensor(const FeatureMatrix& fm) {
  return Tensor::from_data(fm.rows, fm.cols, fm.values);
}

// Rows of `fm` selected by `index`, as a constant tensor.
inline Tensor gather_rows(const FeatureMatrix& fm, const std::vector<std::size_t>& index) {
  std::vector<double> data;
  data.reserve(index.size() * fm.cols);
  for (std::size_t i : index) {
    if (i >= fm.rows) throw std::out_of_range("gather_rows: row index out of range");
    data.insert(data.end(), fm.values.begin() + static_cast<std::ptrdiff_t>(i * fm.cols),
                fm.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * fm.cols));
  }
  return Tensor::from_data(index.size(), fm.cols, std::move(data));
}

inline std::vector<int> gather_labels(const LabelVector& lv,
                                      const std::vector<std::size_t>& index) {
  std::vector<int> out;
  out.reserve(index.size());
  for (std::size_t i : index) out.push_back(lv.ids.at(i));
  return out;
}

// ---------------------------------------------------------------------------
// Deterministic batching.
// ---------------------------------------------------------------------------

// splitmix64-style combiner so each (seed, epoch) pair gets an independent
// stream without correlated low bits.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

// Shuffled index batches for one epoch; a pure function of (m, batch_size,
// seed, epoch). The final batch may be short but is always kept.
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t m, std::size_t batch_size,
                                                          std::uint64_t seed,
                                                          std::uint64_t epoch) {
  if (m == 0) throw std::invalid_argument("make_batches: empty dataset");
  if (batch_size < 1 || batch_size > m)
    throw std::invalid_argument("make_batches: batch size " + std::to_string(batch_size) +
                                " outside [1, " + std::to_string(m) + "]");
  std::vector<std::size_t> perm(m);
  for (std::size_t i = 0; i < m; ++i) perm[i] = i;
  std::mt19937_64 rng(mix_seed(seed, epoch));
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < m; start += batch_size) {
    std::size_t end = std::min(m, start + batch_size);
    batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                         perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

// ---------------------------------------------------------------------------
// Feature, label, and manifest files.
// ---------------------------------------------------------------------------

namespace detail {

// %.17g keeps the shortest-round-trip guarantee for IEEE doubles.
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& field, const std::string& where) {
  const char* s = field.c_str();
  char* end = nullptr;
  double v = std::strtod(s, &end);
  while (end && *end && std::isspace(static_cast<unsigned char>(*end))) ++end;
  if (end == s || (end && *end))
    throw std::runtime_error("bad numeric field '" + field + "' in " + where);
  return v;
}

inline std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ofstream out(path, mode);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ifstream in(path, mode);
  if (!in) throw std::runtime_error("cannot open " + path.string() + " for reading");
  return in;
}

}  // namespace detail

inline constexpr char kFeatureMagic[4] = {'A', 'V', 'F', 'B'};
inline constexpr std::uint16_t kFeatureVersion = 1;

inline void write_features_bin(const std::filesystem::path& path, const FeatureMatrix& fm) {
  auto out = detail::open_out(path, std::ios::binary);
  out.write(kFeatureMagic, 4);
  detail::write_u16(out, kFeatureVersion);
  detail::write_u64(out, fm.rows);
  detail::write_u64(out, fm.cols);
  for (double v : fm.values) detail::write_f64(out, v);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline void write_features_csv(const std::filesystem::path& path, const FeatureMatrix& fm) {
  auto out = detail::open_out(path, std::ios::binary);  // binary: LF endings everywhere
  for (std::size_t i = 0; i < fm.rows; ++i) {
    for (std::size_t j = 0; j < fm.cols; ++j) {
      if (j) out << ',';
      out << detail::fmt_double(fm.at(i, j));
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline void write_labels_csv(const std::filesystem::path& path, const LabelVector& lv) {
  auto out = detail::open_out(path, std::ios::binary);
  for (int y : lv.ids) out << y << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

namespace detail {

inline FeatureMatrix read_features_bin(const std::filesystem::path& path, Modality modality) {
  auto in = open_in(path, std::ios::binary);
  char magic[4];
  read_exact(in, magic, 4, "feature magic");
  if (std::memcmp(magic, kFeatureMagic, 4) != 0)
    throw std::runtime_error(path.string() + ": bad feature file magic");
  std::uint16_t version = read_u16(in, "feature version");
  if (version != kFeatureVersion)
    throw std::runtime_error(path.string() + ": unsupported feature version " +
                             std::to_string(version));
  FeatureMatrix fm;
  fm.modality = modality;
  fm.rows = read_u64(in, "feature rows");
  fm.cols = read_u64(in, "feature cols");
  fm.source = path.string();
  fm.values.resize(fm.rows * fm.cols);
  for (double& v : fm.values) v = read_f64(in, "feature value");
  return fm;
}

inline FeatureMatrix read_features_csv(const std::filesystem::path& path, Modality modality) {
  auto in = open_in(path, std::ios::in);
  FeatureMatrix fm;
  fm.modality = modality;
  fm.source = path.string();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ','))
      row.push_back(parse_double(field, path.string() + ":" + std::to_string(lineno)));
    if (fm.cols == 0)
      fm.cols = row.size();
    else if (row.size() != fm.cols)
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(fm.cols) + " fields, got " +
                               std::to_string(row.size()));
    fm.values.insert(fm.values.end(), row.begin(), row.end());
    ++fm.rows;
  }
  return fm;
}

}  // namespace detail

// Reads a feature file, sniffing binary vs CSV from the leading magic bytes.
inline FeatureMatrix read_features(const std::filesystem::path& path, Modality modality) {
  {
    auto probe = detail::open_in(path, std::ios::binary);
    char magic[4] = {0, 0, 0, 0};
    probe.read(magic, 4);
    if (probe.gcount() == 4 && std::memcmp(magic, kFeatureMagic, 4) == 0)
      return detail::read_features_bin(path, modality);
  }
  return detail::read_features_csv(path, modality);
}

inline LabelVector read_labels_csv(const std::filesystem::path& path) {
  auto in = detail::open_in(path, std::ios::in);
  LabelVector lv;
  lv.source = path.string();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const char* s = line.c_str();
    char* end = nullptr;
    long v = std::strtol(s, &end, 10);
    while (end && *end && std::isspace(static_cast<unsigned char>(*end))) ++end;
    if (end == s || (end && *end))
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": bad label '" + line + "'");
    lv.ids.push_back(static_cast<int>(v));
  }
  return lv;
}

// ---------------------------------------------------------------------------
// Manifests.
// ---------------------------------------------------------------------------

struct Manifest {
  std::string visual_file;
  std::string audio_file;
  std::string label_file;
  int classes = 0;
  std::size_t d_visual = 0;
  std::size_t d_audio = 0;
  std::string split = "train";
  bool zscore = false;
};

inline Manifest read_manifest(const std::filesystem::path& path) {
  auto in = detail::open_in(path, std::ios::in);
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected key=value, got '" + t + "'");
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  auto need = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end())
      throw std::runtime_error(path.string() + ": manifest is missing key '" + key + "'");
    return it->second;
  };
  Manifest m;
  m.visual_file = need("visual_file");
  m.audio_file = need("audio_file");
  m.label_file = need("label_file");
  m.classes = static_cast<int>(std::stol(need("classes")));
  m.d_visual = static_cast<std::size_t>(std::stoull(need("d_visual")));
  m.d_audio = static_cast<std::size_t>(std::stoull(need("d_audio")));
  if (kv.count("split")) m.split = kv["split"];
  if (kv.count("normalize")) {
    const std::string& n = kv["normalize"];
    if (n == "zscore")
      m.zscore = true;
    else if (n != "none")
      throw std::runtime_error(path.string() + ": unknown normalize mode '" + n + "'");
  }
  return m;
}

inline void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  auto out = detail::open_out(path, std::ios::binary);
  out << "visual_file = " << m.visual_file << '\n';
  out << "audio_file = " << m.audio_file << '\n';
  out << "label_file = " << m.label_file << '\n';
  out << "classes = " << m.classes << '\n';
  out << "d_visual = " << m.d_visual << '\n';
  out << "d_audio = " << m.d_audio << '\n';
  out << "split = " << m.split << '\n';
  out << "normalize = " << (m.zscore ? "zscore" : "none") << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Dataset assembly and validation.
// ---------------------------------------------------------------------------

inline void validate_dataset(const PairedDataset& ds, int classes) {
  if (ds.visual.rows != ds.audio.rows || ds.visual.rows != ds.labels.ids.size())
    throw std::runtime_error(
        "pairing mismatch: " + ds.visual.source + " has " + std::to_string(ds.visual.rows) +
        " rows, " + ds.audio.source + " has " + std::to_string(ds.audio.rows) + ", " +
        ds.labels.source + " has " + std::to_string(ds.labels.ids.size()));
  for (std::size_t i = 0; i < ds.labels.ids.size(); ++i) {
    int y = ds.labels.ids[i];
    if (y < 0 || y >= classes)
      throw std::runtime_error(ds.labels.source + ": row " + std::to_string(i + 1) +
                               ": label " + std::to_string(y) + " outside [0, " +
                               std::to_string(classes) + ")");
  }
  auto check_finite = [](const FeatureMatrix& fm) {
    for (std::size_t i = 0; i < fm.rows; ++i)
      for (std::size_t j = 0; j < fm.cols; ++j)
        if (!std::isfinite(fm.at(i, j)))
          throw std::runtime_error(fm.source + ": row " + std::to_string(i + 1) +
                                   ": non-finite value");
  };
  check_finite(ds.visual);
  check_finite(ds.audio);
}

// Loads the manifest at `path` plus the three files it names (paths are
// relative to the manifest's directory) and validates shapes, labels, and
// finiteness. Does not apply normalization; see the `zscore` manifest flag.
inline PairedDataset load_dataset(const std::filesystem::path& path) {
  Manifest m = read_manifest(path);
  auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  auto resolve = [&](const std::string& f) {
    std::filesystem::path p(f);
    return p.is_absolute() ? p : base / p;
  };
  PairedDataset ds;
  ds.visual = read_features(resolve(m.visual_file), Modality::visual);
  ds.audio = read_features(resolve(m.audio_file), Modality::audio);
  ds.labels = read_labels_csv(resolve(m.label_file));
  ds.labels.classes = m.classes;
  ds.split = m.split;
  if (ds.visual.cols != m.d_visual)
    throw std::runtime_error(ds.visual.source + ": expected " + std::to_string(m.d_visual) +
                             " visual dimensions, got " + std::to_string(ds.visual.cols));
  if (ds.audio.cols != m.d_audio)
    throw std::runtime_error(ds.audio.source + ": expected " + std::to_string(m.d_audio) +
                             " audio dimensions, got " + std::to_string(ds.audio.cols));
  validate_dataset(ds, m.classes);
  return ds;
}

// Writes <stem>_{visual,audio}.{csv|bin}, <stem>_labels.csv, and
// <stem>.manifest into `dir`; returns the manifest path.
inline std::filesystem::path save_dataset(const std::filesystem::path& dir,
                                          const std::string& stem, const PairedDataset& ds,
                                          bool binary, bool zscore_flag = false) {
  std::filesystem::create_directories(dir);
  const char* ext = binary ? ".bin" : ".csv";
  Manifest m;
  m.visual_file = stem + "_visual" + ext;
  m.audio_file = stem + "_audio" + ext;
  m.label_file = stem + "_labels.csv";
  m.classes = ds.labels.classes;
  m.d_visual = ds.visual.cols;
  m.d_audio = ds.audio.cols;
  m.split = ds.split;
  m.zscore = zscore_flag;
  if (binary) {
    write_features_bin(dir / m.visual_file, ds.visual);
    write_features_bin(dir / m.audio_file, ds.audio);
  } else {
    write_features_csv(dir / m.visual_file, ds.visual);
    write_features_csv(dir / m.audio_file, ds.audio);
  }
  write_labels_csv(dir / m.label_file, ds.labels);
  auto mpath = dir / (stem + ".manifest");
  write_manifest(mpath, m);
  return mpath;
}

// ---------------------------------------------------------------------------
// Per-dimension standardization (fit on train, apply everywhere).
// ---------------------------------------------------------------------------

struct ZScoreStats {
  std::vector<double> mean;
  std::vector<double> stdev;  // dimensions with zero spread keep scale 1
};

inline ZScoreStats fit_zscore(const FeatureMatrix& fm) {
  if (fm.rows == 0) throw std::invalid_argument("fit_zscore: empty feature matrix");
  ZScoreStats st;
  st.mean.assign(fm.cols, 0.0);
  st.stdev.assign(fm.cols, 0.0);
  for (std::size_t i = 0; i < fm.rows; ++i)
    for (std::size_t j = 0; j < fm.cols; ++j) st.mean[j] += fm.at(i, j);
  for (double& v : st.mean) v /= static_cast<double>(fm.rows);
  for (std::size_t i = 0; i < fm.rows; ++i)
    for (std::size_t j = 0; j < fm.cols; ++j) {
      double d = fm.at(i, j) - st.mean[j];
      st.stdev[j] += d * d;
    }
  for (double& v : st.stdev) {
    v = std::sqrt(v / static_cast<double>(fm.rows));
    if (v == 0.0) v = 1.0;
  }
  return st;
}

inline void apply_zscore(FeatureMatrix& fm, const ZScoreStats& st) {
  if (st.mean.size() != fm.cols)
    throw std::invalid_argument("apply_zscore: stats cover " + std::to_string(st.mean.size()) +
                                " dims, features have " + std::to_string(fm.cols));
  for (std::size_t i = 0; i < fm.rows; ++i)
    for (std::size_t j = 0; j < fm.cols; ++j)
      fm.at(i, j) = (fm.at(i, j) - st.mean[j]) / st.stdev[j];
}

// ---------------------------------------------------------------------------
// Synthetic paired-modality data.
// ---------------------------------------------------------------------------

// Each class owns a latent prototype plus one mixing matrix per modality;
// samples are jittered prototypes pushed through both mixings with additive
// observation noise, so the two views of a sample share class structure
// without sharing a feature space.
struct SyntheticSpec {
  int classes = 5;
  int per_class = 50;
  int prototype_dim = 16;
  double noise_scale = 0.1;
  double jitter_scale = 0.25;
  double train_fraction = 0.8;
  std::size_t d_visual = 64;
  std::size_t d_audio = 32;
  std::uint64_t seed = 1;
};

inline std::pair<PairedDataset, PairedDataset> gen_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 1 || spec.per_class < 1 || spec.prototype_dim < 1)
    throw std::invalid_argument("gen_synthetic: counts and dimensions must be positive");
  if (spec.d_visual < 1 || spec.d_audio < 1)
    throw std::invalid_argument("gen_synthetic: feature dimensions must be positive");
  if (spec.noise_scale < 0.0 || spec.jitter_scale < 0.0)
    throw std::invalid_argument("gen_synthetic: scales must be non-negative");
  int n_train = static_cast<int>(std::lround(spec.per_class * spec.train_fraction));
  if (n_train < 1 || n_train >= spec.per_class)
    throw std::invalid_argument("gen_synthetic: train fraction leaves an empty split");

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t p = static_cast<std::size_t>(spec.prototype_dim);
  double mix_scale = 1.0 / std::sqrt(static_cast<double>(p));

  PairedDataset train, test;
  train.split = "train";
  test.split = "test";
  for (PairedDataset* ds : {&train, &test}) {
    ds->visual.modality = Modality::visual;
    ds->visual.cols = spec.d_visual;
    ds->audio.modality = Modality::audio;
    ds->audio.cols = spec.d_audio;
    ds->labels.classes = spec.classes;
  }

  std::vector<double> proto(p), jitter(p), hidden(p);
  for (int c = 0; c < spec.classes; ++c) {
    for (double& v : proto) v = gauss(rng);
    std::vector<double> mix_a(spec.d_audio * p), mix_v(spec.d_visual * p);
    for (double& v : mix_a) v = gauss(rng) * mix_scale;
    for (double& v : mix_v) v = gauss(rng) * mix_scale;

    for (int s = 0; s < spec.per_class; ++s) {
      for (std::size_t t = 0; t < p; ++t) jitter[t] = gauss(rng) * spec.jitter_scale;
      for (std::size_t t = 0; t < p; ++t) hidden[t] = proto[t] + jitter[t];
      PairedDataset& ds = (s < n_train) ? train : test;
      for (std::size_t j = 0; j < spec.d_visual; ++j) {
        double acc = 0.0;
        for (std::size_t t = 0; t < p; ++t) acc += mix_v[j * p + t] * hidden[t];
        ds.visual.values.push_back(acc + gauss(rng) * spec.noise_scale);
      }
      for (std::size_t j = 0; j < spec.d_audio; ++j) {
        double acc = 0.0;
        for (std::size_t t = 0; t < p; ++t) acc += mix_a[j * p + t] * hidden[t];
        ds.audio.values.push_back(acc + gauss(rng) * spec.noise_scale);
      }
      ds.visual.rows += 1;
      ds.audio.rows += 1;
      ds.labels.ids.push_back(c);
    }
  }
  return {std::move(train), std::move(test)};
}

}  // namespace avret
