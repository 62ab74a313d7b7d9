#pragma once
// Classical linear canonical correlation analysis, fit by whitening each
// view's covariance and taking the SVD of the whitened cross-covariance.
// Serves as the linear baseline for retrieval and as an independent oracle
// for correlation computations. Dense symmetric eigensolves and the SVD use
// Eigen; everything else stays on the project's own matrix type.

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "avret/data.hpp"
#include "avret/tensor.hpp"

namespace avret {

struct CcaModel {
  std::size_t k = 0;
  Tensor w_audio;      // d_a x k
  Tensor w_visual;     // d_v x k
  Tensor mean_audio;   // 1 x d_a
  Tensor mean_visual;  // 1 x d_v
  std::vector<double> correlations;  // rho_1 >= ... >= rho_k
  double ridge_audio = 0.0;          // regularization actually applied
  double ridge_visual = 0.0;
};

namespace detail {

using EMatrix = Eigen::MatrixXd;

inline EMatrix to_eigen(const Tensor& t) {
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                        Eigen::RowMajor>>(
      t.data().data(), static_cast<Eigen::Index>(t.rows()),
      static_cast<Eigen::Index>(t.cols()));
}

inline Tensor from_eigen(const EMatrix& m) {
  std::vector<double> data(static_cast<std::size_t>(m.rows() * m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      data[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  return Tensor::from_data(static_cast<std::size_t>(m.rows()),
                           static_cast<std::size_t>(m.cols()), std::move(data));
}

// Inverse square root of a symmetric positive-definite matrix. Eigenvalues
// at or below a relative floor mean the covariance is effectively singular.
inline EMatrix inv_sqrt_spd(const EMatrix& c, const char* view) {
  Eigen::SelfAdjointEigenSolver<EMatrix> solver(c);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error(std::string("cca fit: eigensolve failed on the ") + view +
                             " covariance");
  const auto& evals = solver.eigenvalues();
  double largest = evals(evals.size() - 1);
  double floor = std::max(largest, 1.0) * 1e-13;
  Eigen::VectorXd inv_sqrt(evals.size());
  for (Eigen::Index i = 0; i < evals.size(); ++i) {
    if (evals(i) <= floor)
      throw std::runtime_error(std::string("cca fit: the ") + view +
                               " covariance is singular; refit with ridge r > 0");
    inv_sqrt(i) = 1.0 / std::sqrt(evals(i));
  }
  return solver.eigenvectors() * inv_sqrt.asDiagonal() * solver.eigenvectors().transpose();
}

}  // namespace detail

// Fits top-k canonical pairs. With no explicit ridge, each view gets
// r = 1e-4 * trace(cov) / d, which keeps near-singular desk-scale inputs
// workable; r = 0 demands genuinely full-rank views.
inline CcaModel cca_fit(const Tensor& x_audio, const Tensor& x_visual, std::size_t k,
                        std::optional<double> ridge = std::nullopt) {
  const std::size_t m = x_audio.rows();
  if (x_visual.rows() != m)
    throw std::invalid_argument("cca fit: views have " + std::to_string(m) + " and " +
                                std::to_string(x_visual.rows()) + " rows");
  if (m < 2) throw std::invalid_argument("cca fit: needs at least 2 samples");
  const std::size_t da = x_audio.cols(), dv = x_visual.cols();
  std::size_t k_max = std::min({da, dv, m - 1});
  if (k < 1 || k > k_max)
    throw std::invalid_argument("cca fit: k = " + std::to_string(k) + " outside [1, " +
                                std::to_string(k_max) + "]");
  if (ridge && *ridge < 0.0) throw std::invalid_argument("cca fit: negative ridge");

  detail::EMatrix a = detail::to_eigen(x_audio);
  detail::EMatrix v = detail::to_eigen(x_visual);
  Eigen::RowVectorXd mean_a = a.colwise().mean();
  Eigen::RowVectorXd mean_v = v.colwise().mean();
  a.rowwise() -= mean_a;
  v.rowwise() -= mean_v;

  double denom = static_cast<double>(m - 1);
  detail::EMatrix caa = (a.transpose() * a) / denom;
  detail::EMatrix cvv = (v.transpose() * v) / denom;
  detail::EMatrix cav = (a.transpose() * v) / denom;

  double ra = ridge ? *ridge : 1e-4 * caa.trace() / static_cast<double>(da);
  double rv = ridge ? *ridge : 1e-4 * cvv.trace() / static_cast<double>(dv);
  caa.diagonal().array() += ra;
  cvv.diagonal().array() += rv;

  detail::EMatrix wa_white = detail::inv_sqrt_spd(caa, "audio");
  detail::EMatrix wv_white = detail::inv_sqrt_spd(cvv, "visual");
  detail::EMatrix t = wa_white * cav * wv_white;

  Eigen::BDCSVD<detail::EMatrix> svd(t, Eigen::ComputeThinU | Eigen::ComputeThinV);
  detail::EMatrix wa = wa_white * svd.matrixU().leftCols(static_cast<Eigen::Index>(k));
  detail::EMatrix wv = wv_white * svd.matrixV().leftCols(static_cast<Eigen::Index>(k));

  // Deterministic orientation: the first nonzero entry of each audio-side
  // direction is positive, and the paired visual direction flips with it so
  // the achieved correlation keeps its sign.
  for (Eigen::Index c = 0; c < wa.cols(); ++c) {
    for (Eigen::Index r = 0; r < wa.rows(); ++r) {
      if (wa(r, c) == 0.0) continue;
      if (wa(r, c) < 0.0) {
        wa.col(c) = -wa.col(c);
        wv.col(c) = -wv.col(c);
      }
      break;
    }
  }

  CcaModel model;
  model.k = k;
  model.w_audio = detail::from_eigen(wa);
  model.w_visual = detail::from_eigen(wv);
  model.mean_audio = detail::from_eigen(mean_a);
  model.mean_visual = detail::from_eigen(mean_v);
  model.correlations.assign(svd.singularValues().data(),
                            svd.singularValues().data() + k);
  model.ridge_audio = ra;
  model.ridge_visual = rv;
  return model;
}

// (X - mean_view) * W_view.
inline Tensor cca_transform(const CcaModel& model, const Tensor& x, Modality view) {
  const Tensor& w = view == Modality::audio ? model.w_audio : model.w_visual;
  const Tensor& mean = view == Modality::audio ? model.mean_audio : model.mean_visual;
  if (x.cols() != w.rows())
    throw std::invalid_argument(std::string("cca transform: ") + to_string(view) +
                                " view expects " + std::to_string(w.rows()) +
                                " dims, got " + std::to_string(x.cols()));
  return matmul(sub(x, mean), w);
}

}  // namespace avret
