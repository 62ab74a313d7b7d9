// Dataset plumbing: label encoding, deterministic batching, file format
// round-trips, manifest handling and validation, standardization, and the
// synthetic paired-modality generator.

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numeric>

#include "avret/data.hpp"
#include "test_support.hpp"

using namespace avret;

TEST(OneHot, EncodesAndValidates) {
  auto row = one_hot(2, 4);
  EXPECT_EQ(row.size(), 4u);
  EXPECT_DOUBLE_EQ(row[2], 1.0);
  EXPECT_DOUBLE_EQ(std::accumulate(row.begin(), row.end(), 0.0), 1.0);
  EXPECT_THROW(one_hot(4, 4), std::invalid_argument);
  EXPECT_THROW(one_hot(-1, 4), std::invalid_argument);

  Tensor m = one_hot_matrix({0, 3, 1}, 4);
  EXPECT_EQ(m.rows(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) s += m(i, j);
    EXPECT_DOUBLE_EQ(s, 1.0);
  }
  EXPECT_DOUBLE_EQ(m(1, 3), 1.0);
}

TEST(MakeBatches, CoversEveryIndexOnceAndKeepsShortTail) {
  auto batches = make_batches(10, 4, 7, 0);
  ASSERT_EQ(batches.size(), 3u);
  EXPECT_EQ(batches[0].size(), 4u);
  EXPECT_EQ(batches[2].size(), 2u);
  std::vector<int> seen(10, 0);
  for (const auto& b : batches)
    for (std::size_t i : b) seen[i] += 1;
  for (int c : seen) EXPECT_EQ(c, 1);
}

TEST(MakeBatches, PureFunctionOfSeedAndEpoch) {
  EXPECT_EQ(make_batches(64, 8, 5, 3), make_batches(64, 8, 5, 3));
  EXPECT_NE(make_batches(64, 8, 5, 3), make_batches(64, 8, 5, 4));
  EXPECT_NE(make_batches(64, 8, 5, 3), make_batches(64, 8, 6, 3));
}

TEST(MakeBatches, RejectsBadBatchSize) {
  EXPECT_THROW(make_batches(10, 0, 1, 0), std::invalid_argument);
  EXPECT_THROW(make_batches(10, 11, 1, 0), std::invalid_argument);
  EXPECT_THROW(make_batches(0, 1, 1, 0), std::invalid_argument);
}

namespace {

FeatureMatrix sample_features(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-5.0, 5.0);
  FeatureMatrix fm;
  fm.rows = rows;
  fm.cols = cols;
  fm.values.resize(rows * cols);
  for (double& v : fm.values) v = dist(rng);
  // include awkward values that stress text round-trips
  fm.values[0] = 1.0 / 3.0;
  if (fm.values.size() > 1) fm.values[1] = 1e-17;
  if (fm.values.size() > 2) fm.values[2] = -0.0;
  return fm;
}

}  // namespace

TEST(FeatureFiles, BinaryRoundTripIsBitExact) {
  auto dir = testutil::scratch_dir("data_bin");
  FeatureMatrix fm = sample_features(7, 5, 3);
  write_features_bin(dir / "f.bin", fm);
  FeatureMatrix back = read_features(dir / "f.bin", Modality::audio);
  EXPECT_EQ(back.rows, fm.rows);
  EXPECT_EQ(back.cols, fm.cols);
  for (std::size_t i = 0; i < fm.values.size(); ++i) {
    std::uint64_t a, b;
    std::memcpy(&a, &fm.values[i], 8);
    std::memcpy(&b, &back.values[i], 8);
    EXPECT_EQ(a, b) << "flat index " << i;
  }
}

TEST(FeatureFiles, CsvRoundTripIsExactAtPrintPrecision) {
  auto dir = testutil::scratch_dir("data_csv");
  FeatureMatrix fm = sample_features(6, 4, 4);
  write_features_csv(dir / "f.csv", fm);
  FeatureMatrix back = read_features(dir / "f.csv", Modality::visual);
  ASSERT_EQ(back.rows, fm.rows);
  ASSERT_EQ(back.cols, fm.cols);
  // %.17g prints a shortest exact representation, so values survive unchanged
  for (std::size_t i = 0; i < fm.values.size(); ++i)
    EXPECT_EQ(fm.values[i], back.values[i]) << "flat index " << i;
}

TEST(FeatureFiles, CsvRejectsRaggedAndJunkRows) {
  auto dir = testutil::scratch_dir("data_badcsv");
  {
    std::ofstream out(dir / "ragged.csv");
    out << "1,2,3\n1,2\n";
  }
  EXPECT_THROW(read_features(dir / "ragged.csv", Modality::visual), std::runtime_error);
  {
    std::ofstream out(dir / "junk.csv");
    out << "1,2\n1,banana\n";
  }
  EXPECT_THROW(read_features(dir / "junk.csv", Modality::visual), std::runtime_error);
}

TEST(FeatureFiles, TruncatedBinaryIsDiagnosed) {
  auto dir = testutil::scratch_dir("data_trunc");
  FeatureMatrix fm = sample_features(4, 4, 5);
  write_features_bin(dir / "f.bin", fm);
  auto size = std::filesystem::file_size(dir / "f.bin");
  std::filesystem::resize_file(dir / "f.bin", size - 8);
  EXPECT_THROW(read_features(dir / "f.bin", Modality::audio), std::runtime_error);
}

TEST(Manifests, RoundTripAndMissingKey) {
  auto dir = testutil::scratch_dir("data_manifest");
  Manifest m;
  m.visual_file = "v.csv";
  m.audio_file = "a.csv";
  m.label_file = "y.csv";
  m.classes = 7;
  m.d_visual = 12;
  m.d_audio = 5;
  m.split = "test";
  m.zscore = true;
  write_manifest(dir / "d.manifest", m);
  Manifest back = read_manifest(dir / "d.manifest");
  EXPECT_EQ(back.visual_file, "v.csv");
  EXPECT_EQ(back.classes, 7);
  EXPECT_EQ(back.d_audio, 5u);
  EXPECT_EQ(back.split, "test");
  EXPECT_TRUE(back.zscore);

  {
    std::ofstream out(dir / "partial.manifest");
    out << "visual_file = v.csv\naudio_file = a.csv\n";
  }
  try {
    read_manifest(dir / "partial.manifest");
    FAIL() << "expected missing-key error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("label_file"), std::string::npos) << e.what();
  }
}

namespace {

std::filesystem::path write_triplet(const std::filesystem::path& dir, int rows_v, int rows_a,
                                    const std::vector<int>& labels) {
  FeatureMatrix v = sample_features(static_cast<std::size_t>(rows_v), 3, 11);
  FeatureMatrix a = sample_features(static_cast<std::size_t>(rows_a), 2, 12);
  write_features_csv(dir / "v.csv", v);
  write_features_csv(dir / "a.csv", a);
  LabelVector lv;
  lv.ids = labels;
  write_labels_csv(dir / "y.csv", lv);
  Manifest m;
  m.visual_file = "v.csv";
  m.audio_file = "a.csv";
  m.label_file = "y.csv";
  m.classes = 3;
  m.d_visual = 3;
  m.d_audio = 2;
  write_manifest(dir / "d.manifest", m);
  return dir / "d.manifest";
}

}  // namespace

TEST(LoadDataset, ResolvesRelativePathsAndValidates) {
  auto dir = testutil::scratch_dir("data_load");
  auto manifest = write_triplet(dir, 4, 4, {0, 1, 2, 0});
  PairedDataset ds = load_dataset(manifest);
  EXPECT_EQ(ds.size(), 4u);
  EXPECT_EQ(ds.visual.cols, 3u);
  EXPECT_EQ(ds.audio.cols, 2u);
  EXPECT_EQ(ds.labels.classes, 3);
}

TEST(LoadDataset, PairingMismatchNamesCounts) {
  auto dir = testutil::scratch_dir("data_pair");
  auto manifest = write_triplet(dir, 4, 3, {0, 1, 2, 0});
  try {
    load_dataset(manifest);
    FAIL() << "expected pairing error";
  } catch (const std::runtime_error& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("4"), std::string::npos) << msg;
    EXPECT_NE(msg.find("3"), std::string::npos) << msg;
  }
}

TEST(LoadDataset, LabelOutOfRangeNamesRow) {
  auto dir = testutil::scratch_dir("data_label");
  auto manifest = write_triplet(dir, 4, 4, {0, 1, 5, 0});
  try {
    load_dataset(manifest);
    FAIL() << "expected label error";
  } catch (const std::runtime_error& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("row 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("5"), std::string::npos) << msg;
  }
}

TEST(LoadDataset, NonFiniteValueIsRejected) {
  auto dir = testutil::scratch_dir("data_nan");
  write_triplet(dir, 4, 4, {0, 1, 2, 0});
  {
    std::ofstream out(dir / "v.csv");
    out << "1,2,3\n1,nan,3\n1,2,3\n1,2,3\n";
  }
  EXPECT_THROW(load_dataset(dir / "d.manifest"), std::runtime_error);
}

TEST(SaveDataset, RoundTripsThroughBothFormats) {
  auto dir = testutil::scratch_dir("data_save");
  SyntheticSpec spec;
  spec.classes = 3;
  spec.per_class = 10;
  spec.d_visual = 6;
  spec.d_audio = 4;
  spec.seed = 9;
  auto [train, test] = gen_synthetic(spec);
  for (bool binary : {true, false}) {
    auto sub = dir / (binary ? "bin" : "csv");
    auto manifest = save_dataset(sub, "train", train, binary);
    PairedDataset back = load_dataset(manifest);
    ASSERT_EQ(back.size(), train.size());
    for (std::size_t i = 0; i < train.visual.values.size(); ++i)
      EXPECT_EQ(back.visual.values[i], train.visual.values[i]);
    for (std::size_t i = 0; i < train.audio.values.size(); ++i)
      EXPECT_EQ(back.audio.values[i], train.audio.values[i]);
    EXPECT_EQ(back.labels.ids, train.labels.ids);
  }
}

TEST(ZScore, StandardizesAndHandlesConstantDims) {
  FeatureMatrix fm = sample_features(50, 4, 21);
  for (std::size_t i = 0; i < fm.rows; ++i) fm.at(i, 3) = 2.5;  // constant dim
  ZScoreStats st = fit_zscore(fm);
  apply_zscore(fm, st);
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < fm.rows; ++i) mean += fm.at(i, j);
    mean /= static_cast<double>(fm.rows);
    for (std::size_t i = 0; i < fm.rows; ++i) {
      double d = fm.at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(fm.rows);
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-12);
  }
  for (std::size_t i = 0; i < fm.rows; ++i) EXPECT_DOUBLE_EQ(fm.at(i, 3), 0.0);

  FeatureMatrix other = sample_features(5, 7, 22);
  EXPECT_THROW(apply_zscore(other, st), std::invalid_argument);
}

namespace {

double cosine_rows(const FeatureMatrix& fm, std::size_t i, std::size_t k) {
  double dot = 0.0, ni = 0.0, nk = 0.0;
  for (std::size_t j = 0; j < fm.cols; ++j) {
    dot += fm.at(i, j) * fm.at(k, j);
    ni += fm.at(i, j) * fm.at(i, j);
    nk += fm.at(k, j) * fm.at(k, j);
  }
  return dot / std::sqrt(ni * nk);
}

}  // namespace

TEST(Synthetic, DeterministicSplitSizesAndLabels) {
  SyntheticSpec spec;
  spec.classes = 5;
  spec.per_class = 50;
  spec.seed = 42;
  auto [train, test] = gen_synthetic(spec);
  EXPECT_EQ(train.size(), 200u);
  EXPECT_EQ(test.size(), 50u);
  EXPECT_EQ(train.visual.cols, 64u);
  EXPECT_EQ(train.audio.cols, 32u);
  for (int c = 0; c < 5; ++c) {
    EXPECT_EQ(std::count(train.labels.ids.begin(), train.labels.ids.end(), c), 40);
    EXPECT_EQ(std::count(test.labels.ids.begin(), test.labels.ids.end(), c), 10);
  }
  auto [train2, test2] = gen_synthetic(spec);
  EXPECT_EQ(train.visual.values, train2.visual.values);
  EXPECT_EQ(test.audio.values, test2.audio.values);
  spec.seed = 43;
  auto [train3, test3] = gen_synthetic(spec);
  EXPECT_NE(train.visual.values, train3.visual.values);
}

TEST(Synthetic, SameClassPairsAreMoreSimilarWithinEachModality) {
  SyntheticSpec spec;
  spec.classes = 4;
  spec.per_class = 20;
  spec.seed = 3;
  auto [train, test] = gen_synthetic(spec);
  for (const FeatureMatrix* fm : {&train.visual, &train.audio}) {
    double same = 0.0, cross = 0.0;
    std::size_t n_same = 0, n_cross = 0;
    for (std::size_t i = 0; i < train.size(); ++i)
      for (std::size_t k = i + 1; k < train.size(); ++k) {
        double c = cosine_rows(*fm, i, k);
        if (train.labels.ids[i] == train.labels.ids[k]) {
          same += c;
          ++n_same;
        } else {
          cross += c;
          ++n_cross;
        }
      }
    EXPECT_GT(same / n_same, cross / n_cross + 0.2) << to_string(fm->modality);
  }
}

TEST(Synthetic, ZeroNoiseZeroJitterCollapsesClasses) {
  SyntheticSpec spec;
  spec.classes = 2;
  spec.per_class = 5;
  spec.noise_scale = 0.0;
  spec.jitter_scale = 0.0;
  auto [train, test] = gen_synthetic(spec);
  for (std::size_t i = 1; i < train.size(); ++i) {
    if (train.labels.ids[i] != train.labels.ids[0]) continue;
    for (std::size_t j = 0; j < train.visual.cols; ++j)
      EXPECT_DOUBLE_EQ(train.visual.at(i, j), train.visual.at(0, j));
  }
}

TEST(Synthetic, RejectsDegenerateSplits) {
  SyntheticSpec spec;
  spec.per_class = 1;
  EXPECT_THROW(gen_synthetic(spec), std::invalid_argument);
  SyntheticSpec spec2;
  spec2.train_fraction = 0.0;
  EXPECT_THROW(gen_synthetic(spec2), std::invalid_argument);
}
