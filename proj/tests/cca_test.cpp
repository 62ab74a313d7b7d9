// Canonical correlation baseline: identical-view and Pearson oracles, the
// descending-correlation and whitening invariants, affine invariance,
// deterministic sign convention, and degenerate-input handling.

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "avret/cca.hpp"
#include "test_support.hpp"

using namespace avret;

namespace {

double column_pearson(const Tensor& a, std::size_t ca, const Tensor& b, std::size_t cb) {
  std::size_t m = a.rows();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    ma += a(i, ca);
    mb += b(i, cb);
  }
  ma /= static_cast<double>(m);
  mb /= static_cast<double>(m);
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double da = a(i, ca) - ma, db = b(i, cb) - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  return cov / std::sqrt(va * vb);
}

}  // namespace

TEST(CcaFit, IdenticalViewsGiveUnitCorrelations) {
  std::mt19937_64 rng(31);
  Tensor x = testutil::random_tensor(50, 4, rng);
  CcaModel model = cca_fit(x, x, 4, 0.0);
  ASSERT_EQ(model.correlations.size(), 4u);
  for (double rho : model.correlations) EXPECT_NEAR(rho, 1.0, 1e-9);
}

TEST(CcaFit, OneDimViewsMatchPearson) {
  std::mt19937_64 rng(32);
  Tensor a = testutil::random_tensor(40, 1, rng);
  // correlated second view with noise
  std::vector<double> bv(40);
  std::normal_distribution<double> noise(0.0, 0.4);
  for (std::size_t i = 0; i < 40; ++i) bv[i] = 1.7 * a(i, 0) + noise(rng);
  Tensor b = Tensor::from_data(40, 1, std::move(bv));
  CcaModel model = cca_fit(a, b, 1, 0.0);
  EXPECT_NEAR(model.correlations[0], std::fabs(column_pearson(a, 0, b, 0)), 1e-10);
}

TEST(CcaFit, IndependentViewsHaveSmallCorrelations) {
  std::mt19937_64 rng(33);
  Tensor a = testutil::random_tensor(1000, 5, rng);
  Tensor b = testutil::random_tensor(1000, 5, rng);
  CcaModel model = cca_fit(a, b, 5, 0.0);
  for (double rho : model.correlations) {
    EXPECT_GE(rho, 0.0);
    EXPECT_LT(rho, 0.2);
  }
}

TEST(CcaFit, CorrelationsDescendWithinSlack) {
  std::mt19937_64 rng(34);
  Tensor a = testutil::random_tensor(80, 6, rng);
  Tensor b = testutil::random_tensor(80, 4, rng);
  CcaModel model = cca_fit(a, b, 4, 0.0);
  EXPECT_LE(model.correlations[0], 1.0 + 1e-9);
  for (std::size_t i = 1; i < model.correlations.size(); ++i)
    EXPECT_LE(model.correlations[i], model.correlations[i - 1] + 1e-9);
  EXPECT_GE(model.correlations.back(), -1e-9);
}

TEST(CcaTransform, ProjectedTrainViewsAreWhiteAndReproduceRho) {
  std::mt19937_64 rng(35);
  Tensor a = testutil::random_tensor(120, 5, rng);
  // build a visual view sharing structure with the audio view
  Tensor mixer = testutil::random_tensor(5, 7, rng);
  Tensor noise = testutil::random_tensor(120, 7, rng, 0.5);
  Tensor b = add(matmul(a, mixer), noise);
  CcaModel model = cca_fit(a, b, 4, 0.0);

  Tensor pa = cca_transform(model, a, Modality::audio);
  Tensor pb = cca_transform(model, b, Modality::visual);
  EXPECT_EQ(pa.rows(), 120u);
  EXPECT_EQ(pa.cols(), 4u);

  // identity covariance per projected view (r = 0)
  for (const Tensor* p : {&pa, &pb}) {
    for (std::size_t c1 = 0; c1 < 4; ++c1)
      for (std::size_t c2 = 0; c2 < 4; ++c2) {
        double mean1 = 0.0, mean2 = 0.0;
        for (std::size_t i = 0; i < p->rows(); ++i) {
          mean1 += (*p)(i, c1);
          mean2 += (*p)(i, c2);
        }
        mean1 /= static_cast<double>(p->rows());
        mean2 /= static_cast<double>(p->rows());
        double cov = 0.0;
        for (std::size_t i = 0; i < p->rows(); ++i)
          cov += ((*p)(i, c1) - mean1) * ((*p)(i, c2) - mean2);
        cov /= static_cast<double>(p->rows() - 1);
        EXPECT_NEAR(cov, c1 == c2 ? 1.0 : 0.0, 1e-6) << "cols " << c1 << "," << c2;
      }
  }

  // paired projected columns correlate at +rho
  for (std::size_t c = 0; c < 4; ++c)
    EXPECT_NEAR(column_pearson(pa, c, pb, c), model.correlations[c], 1e-6) << "pair " << c;
}

TEST(CcaFit, AffineInvarianceOfCorrelations) {
  std::mt19937_64 rng(36);
  Tensor a = testutil::random_tensor(100, 4, rng);
  Tensor mixer = testutil::random_tensor(4, 4, rng);
  Tensor b = add(matmul(a, mixer), testutil::random_tensor(100, 4, rng, 0.7));
  CcaModel base = cca_fit(a, b, 3, 0.0);

  // invertible transform: well-conditioned random matrix plus a shift
  Tensor t = add(testutil::random_tensor(4, 4, rng, 0.3),
                 Tensor::from_rows({{2.0, 0.0, 0.0, 0.0},
                                    {0.0, 2.0, 0.0, 0.0},
                                    {0.0, 0.0, 2.0, 0.0},
                                    {0.0, 0.0, 0.0, 2.0}}));
  Tensor shift = Tensor::from_rows({{5.0, -3.0, 0.5, 9.0}});
  Tensor a2 = add(matmul(a, t), shift);
  CcaModel moved = cca_fit(a2, b, 3, 0.0);
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_NEAR(moved.correlations[i], base.correlations[i], 1e-6) << "rho " << i;
}

TEST(CcaFit, DeterministicIncludingSigns) {
  std::mt19937_64 rng(37);
  Tensor a = testutil::random_tensor(60, 5, rng);
  Tensor b = testutil::random_tensor(60, 3, rng);
  CcaModel m1 = cca_fit(a, b, 3);
  CcaModel m2 = cca_fit(a, b, 3);
  EXPECT_EQ(m1.w_audio.data(), m2.w_audio.data());
  EXPECT_EQ(m1.w_visual.data(), m2.w_visual.data());
  // sign convention: first nonzero entry of each audio direction positive
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t r = 0; r < m1.w_audio.rows(); ++r) {
      if (m1.w_audio(r, c) == 0.0) continue;
      EXPECT_GT(m1.w_audio(r, c), 0.0) << "column " << c;
      break;
    }
  }
}

TEST(CcaFit, SingularCovarianceAdvisesRidge) {
  // duplicate column makes the audio covariance rank-deficient
  std::mt19937_64 rng(38);
  Tensor base = testutil::random_tensor(30, 2, rng);
  std::vector<double> dup;
  for (std::size_t i = 0; i < 30; ++i) {
    dup.push_back(base(i, 0));
    dup.push_back(base(i, 1));
    dup.push_back(base(i, 0));  // exact copy of column 0
  }
  Tensor a = Tensor::from_data(30, 3, std::move(dup));
  Tensor b = testutil::random_tensor(30, 3, rng);
  try {
    cca_fit(a, b, 2, 0.0);
    FAIL() << "expected singularity diagnostic";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("ridge"), std::string::npos) << e.what();
  }
  // the default ridge makes the same fit work, zero-variance columns included
  std::vector<double> flat;
  for (std::size_t i = 0; i < 30; ++i) {
    flat.push_back(base(i, 0));
    flat.push_back(base(i, 1));
    flat.push_back(7.0);  // constant column
  }
  Tensor a2 = Tensor::from_data(30, 3, std::move(flat));
  CcaModel model = cca_fit(a2, b, 2);
  Tensor proj = cca_transform(model, a2, Modality::audio);
  for (double v : proj.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(CcaFit, PreconditionErrors) {
  std::mt19937_64 rng(39);
  Tensor a = testutil::random_tensor(10, 3, rng);
  Tensor b = testutil::random_tensor(10, 4, rng);
  EXPECT_THROW(cca_fit(a, testutil::random_tensor(9, 4, rng), 2), std::invalid_argument);
  EXPECT_THROW(cca_fit(a, b, 0), std::invalid_argument);
  EXPECT_THROW(cca_fit(a, b, 4), std::invalid_argument);  // k > min(d_a, d_v)
  EXPECT_THROW(cca_fit(a, b, 2, -1.0), std::invalid_argument);

  CcaModel model = cca_fit(a, b, 2);
  EXPECT_THROW(cca_transform(model, b, Modality::audio), std::invalid_argument);
}
