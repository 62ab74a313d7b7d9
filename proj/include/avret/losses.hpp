#pragma once
// Loss terms for the dual-branch model and their weighted combination.
//
// All loss ops build autodiff graph nodes, so a single backward() on the
// combined scalar reaches every parameter. Batch-size normalization follows
// one convention throughout: reconstruction and center losses divide their
// sums by n, the distance and discriminative losses scale the (plain, not
// squared) Frobenius norms by 1/n, and the pairwise correlation loss
// divides each of its three blocks by n².

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "avret/model.hpp"
#include "avret/tensor.hpp"

namespace avret {

struct LossWeights {
  double lambda1 = 0.0001;  // variational term
  double lambda2 = 0.001;   // pairwise correlation term
  double lambda3 = 0.1;     // cross-modal distance term
  double lambda4 = 0.01;    // center term
  // Gate on the discriminative term. 1 reproduces the published objective;
  // 0 removes it, which is how the ablation arms isolate single terms.
  double discr_weight = 1.0;
};

struct LossReport {
  double rec = 0.0;
  double kl = 0.0;
  double vae = 0.0;
  double corr = 0.0;
  double dist = 0.0;
  double discr = 0.0;
  double center = 0.0;
  double total = 0.0;
};

namespace detail {

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape " +
                                shape_str(a.rows(), a.cols()) + " does not match " +
                                shape_str(b.rows(), b.cols()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Variational terms.
// ---------------------------------------------------------------------------

// Sum over both modalities of the squared Frobenius reconstruction
// residual, divided by batch size.
inline Tensor reconstruction_loss(const Tensor& x_v, const Tensor& xhat_v, const Tensor& x_a,
                                  const Tensor& xhat_a) {
  detail::require_same_shape("reconstruction_loss", x_v, xhat_v);
  detail::require_same_shape("reconstruction_loss", x_a, xhat_a);
  if (x_v.rows() != x_a.rows())
    throw std::invalid_argument("reconstruction_loss: modality batches differ");
  double inv_n = 1.0 / static_cast<double>(x_v.rows());
  Tensor sv = sum(square(sub(x_v, xhat_v)));
  Tensor sa = sum(square(sub(x_a, xhat_a)));
  return mul_scalar(add(sv, sa), inv_n);
}

// Closed-form KL(N(mu, sigma) || N(0, I)) for one modality, batch-mean:
// (1/n) * 1/2 * sum(mu^2 + exp(log_var) - 1 - log_var).
inline Tensor kl_term(const LatentCode& code) {
  detail::require_same_shape("kl_term", code.mu, code.log_var);
  double half_inv_n = 0.5 / static_cast<double>(code.mu.rows());
  Tensor inner = sub(add(square(code.mu), exp(code.log_var)), add_scalar(code.log_var, 1.0));
  return mul_scalar(sum(inner), half_inv_n);
}

inline Tensor kl_loss(const LatentCode& code_v, const LatentCode& code_a) {
  return add(kl_term(code_v), kl_term(code_a));
}

inline Tensor vae_loss(const Tensor& x_v, const Tensor& xhat_v, const Tensor& x_a,
                       const Tensor& xhat_a, const LatentCode& code_v,
                       const LatentCode& code_a) {
  return add(reconstruction_loss(x_v, xhat_v, x_a, xhat_a), kl_loss(code_v, code_a));
}

// ---------------------------------------------------------------------------
// Batch-level correlation (diagnostic; not part of the training objective).
// ---------------------------------------------------------------------------

// corr = sum_j cov_j / sqrt(sum_j var_j(za) * sum_j var_j(zb)), columns
// centered across the batch. A constant input has no direction, so it is
// rejected rather than silently producing 0/0.
inline Tensor corr(const Tensor& za, const Tensor& zb) {
  detail::require_same_shape("corr", za, zb);
  if (za.rows() < 2) throw std::invalid_argument("corr: needs a batch of at least 2");
  Tensor ca = sub(za, col_mean(za));
  Tensor cb = sub(zb, col_mean(zb));
  Tensor cov = sum(mul(ca, cb));
  Tensor va = sum(square(ca));
  Tensor vb = sum(square(cb));
  if (va.scalar() == 0.0 || vb.scalar() == 0.0)
    throw std::domain_error("corr: degenerate input with zero variance");
  return div(cov, sqrt(mul(va, vb)));
}

// ---------------------------------------------------------------------------
// Pairwise correlation loss.
// ---------------------------------------------------------------------------

// One pair's contribution: log(1 + e^t) - s*t, where t is half the
// correlation of the two sample vectors and s says whether the samples
// share a category. Exposed for direct oracle checks.
inline double pair_term(double t, bool same_category) {
  return std::log(1.0 + std::exp(t)) - (same_category ? t : 0.0);
}

namespace detail {

// Rows centered across dims and scaled to unit norm; the product of two
// such rows is exactly their Pearson correlation with dims as observations.
inline Tensor corr_rows(const Tensor& z) {
  return row_unit(sub(z, row_mean(z)));
}

inline std::size_t count_constant_rows(const Tensor& z) {
  std::size_t bad = 0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    double first = z(i, 0);
    bool constant = true;
    for (std::size_t j = 1; j < z.cols(); ++j)
      if (z(i, j) != first) {
        constant = false;
        break;
      }
    bad += constant;
  }
  return bad;
}

}  // namespace detail

// Sum of three blocks (audio-visual, visual-visual, audio-audio), each the
// (1/n²) double sum of pair_term over sample pairs. Constant sample vectors
// have undefined pairwise correlation; they contribute t = 0 and are
// tallied into *degenerate_rows instead of aborting the step.
inline Tensor correlation_loss(const Tensor& z_v, const Tensor& z_a,
                               const std::vector<int>& labels,
                               std::size_t* degenerate_rows = nullptr) {
  detail::require_same_shape("correlation_loss", z_v, z_a);
  const std::size_t n = z_v.rows();
  if (labels.size() != n)
    throw std::invalid_argument("correlation_loss: " + std::to_string(labels.size()) +
                                " labels for a batch of " + std::to_string(n));
  if (degenerate_rows)
    *degenerate_rows += detail::count_constant_rows(z_v) + detail::count_constant_rows(z_a);

  std::vector<double> same(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) same[i * n + j] = labels[i] == labels[j] ? 1.0 : 0.0;
  Tensor s = Tensor::from_data(n, n, std::move(same));

  Tensor rv = detail::corr_rows(z_v);
  Tensor ra = detail::corr_rows(z_a);
  double inv_n2 = 1.0 / static_cast<double>(n * n);
  auto block = [&](const Tensor& a, const Tensor& b) {
    Tensor t = mul_scalar(matmul(a, transpose(b)), 0.5);
    Tensor term = sub(log(add_scalar(exp(t), 1.0)), mul(s, t));
    return mul_scalar(sum(term), inv_n2);
  };
  return add(add(block(ra, rv), block(rv, rv)), block(ra, ra));
}

// ---------------------------------------------------------------------------
// Distance, discriminative, and center terms.
// ---------------------------------------------------------------------------

// (1/n) * ||Z_v - Z_a||_F. Plain Frobenius norm, not its square.
inline Tensor distance_loss(const Tensor& z_v, const Tensor& z_a) {
  detail::require_same_shape("distance_loss", z_v, z_a);
  double inv_n = 1.0 / static_cast<double>(z_v.rows());
  return mul_scalar(frobenius(sub(z_v, z_a)), inv_n);
}

// (1/n) * ||P_a - Y||_F + (1/n) * ||P_v - Y||_F over raw classifier outputs.
inline Tensor discriminative_loss(const Tensor& pred_a, const Tensor& pred_v,
                                  const Tensor& onehot_labels) {
  detail::require_same_shape("discriminative_loss", pred_a, onehot_labels);
  detail::require_same_shape("discriminative_loss", pred_v, onehot_labels);
  for (std::size_t i = 0; i < onehot_labels.rows(); ++i) {
    std::size_t ones = 0;
    bool clean = true;
    for (std::size_t j = 0; j < onehot_labels.cols(); ++j) {
      double v = onehot_labels(i, j);
      if (v == 1.0)
        ++ones;
      else if (v != 0.0)
        clean = false;
    }
    if (ones != 1 || !clean)
      throw std::invalid_argument("discriminative_loss: label row " + std::to_string(i) +
                                  " is not one-hot");
  }
  double inv_n = 1.0 / static_cast<double>(pred_a.rows());
  return add(mul_scalar(frobenius(sub(pred_a, onehot_labels)), inv_n),
             mul_scalar(frobenius(sub(pred_v, onehot_labels)), inv_n));
}

namespace detail {

inline Tensor gather_centers(const Tensor& centers, const std::vector<int>& labels) {
  const std::size_t o = centers.cols();
  const int c = static_cast<int>(centers.rows());
  std::vector<double> rows;
  rows.reserve(labels.size() * o);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int y = labels[i];
    if (y < 0 || y >= c)
      throw std::invalid_argument("center_loss: label " + std::to_string(y) + " at row " +
                                  std::to_string(i) + " outside [0, " + std::to_string(c) +
                                  ")");
    const auto& data = centers.data();
    rows.insert(rows.end(), data.begin() + static_cast<std::ptrdiff_t>(y * o),
                data.begin() + static_cast<std::ptrdiff_t>((y + 1) * o));
  }
  return Tensor::from_data(labels.size(), o, std::move(rows));
}

}  // namespace detail

// (1/n) * 1/2 * (sum_i ||z_v,i - c_{y_i}||² + sum_i ||z_a,i - c_{y_i}||²).
// Centers enter as constants; they are maintained by update_centers, not by
// gradient descent.
inline Tensor center_loss(const Tensor& z_v, const Tensor& z_a, const std::vector<int>& labels,
                          const Tensor& centers) {
  detail::require_same_shape("center_loss", z_v, z_a);
  if (labels.size() != z_v.rows())
    throw std::invalid_argument("center_loss: " + std::to_string(labels.size()) +
                                " labels for a batch of " + std::to_string(z_v.rows()));
  if (centers.cols() != z_v.cols())
    throw std::invalid_argument("center_loss: centers have " + std::to_string(centers.cols()) +
                                " dims, codes have " + std::to_string(z_v.cols()));
  Tensor c = detail::gather_centers(centers, labels);
  double half_inv_n = 0.5 / static_cast<double>(z_v.rows());
  return mul_scalar(add(sum(square(sub(z_v, c))), sum(square(sub(z_a, c)))), half_inv_n);
}

// Running class-center update on one batch of codes:
//   c_j <- c_j - alpha * (sum_{i: y_i = j} (c_j - z_i)) / (1 + n_j)
// Classes absent from the batch keep their centers. Returns new centers;
// the input tensor is untouched.
inline Tensor update_centers(const Tensor& centers, const Tensor& z,
                             const std::vector<int>& labels, double alpha) {
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("update_centers: alpha " + std::to_string(alpha) +
                                " outside [0, 1]");
  if (labels.size() != z.rows())
    throw std::invalid_argument("update_centers: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(z.rows()) + " codes");
  if (centers.cols() != z.cols())
    throw std::invalid_argument("update_centers: centers have " +
                                std::to_string(centers.cols()) + " dims, codes have " +
                                std::to_string(z.cols()));
  const std::size_t c = centers.rows(), o = centers.cols();
  std::vector<double> next = centers.data();
  std::vector<double> delta(c * o, 0.0);
  std::vector<std::size_t> count(c, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int y = labels[i];
    if (y < 0 || y >= static_cast<int>(c))
      throw std::invalid_argument("update_centers: label " + std::to_string(y) +
                                  " outside [0, " + std::to_string(c) + ")");
    for (std::size_t j = 0; j < o; ++j)
      delta[static_cast<std::size_t>(y) * o + j] +=
          next[static_cast<std::size_t>(y) * o + j] - z(i, j);
    count[static_cast<std::size_t>(y)] += 1;
  }
  for (std::size_t y = 0; y < c; ++y) {
    if (count[y] == 0) continue;
    double scale = alpha / (1.0 + static_cast<double>(count[y]));
    for (std::size_t j = 0; j < o; ++j) next[y * o + j] -= scale * delta[y * o + j];
  }
  return Tensor::from_data(c, o, std::move(next));
}

// Pooled form: both modalities' codes count toward the same class tallies.
inline Tensor update_centers(const Tensor& centers, const Tensor& z_v, const Tensor& z_a,
                             const std::vector<int>& labels, double alpha) {
  detail::require_same_shape("update_centers", z_v, z_a);
  std::vector<double> pooled;
  pooled.reserve(2 * z_v.size());
  pooled.insert(pooled.end(), z_v.data().begin(), z_v.data().end());
  pooled.insert(pooled.end(), z_a.data().begin(), z_a.data().end());
  std::vector<int> twice = labels;
  twice.insert(twice.end(), labels.begin(), labels.end());
  Tensor stacked = Tensor::from_data(2 * z_v.rows(), z_v.cols(), std::move(pooled));
  return update_centers(centers, stacked, twice, alpha);
}

// ---------------------------------------------------------------------------
// Combination.
// ---------------------------------------------------------------------------

// Weighted objective as a graph scalar:
//   discr_weight*discr + l1*vae + l2*corr + l3*dist + l4*center.
inline Tensor total_loss(const Tensor& discr, const Tensor& vae, const Tensor& corr_l,
                         const Tensor& dist, const Tensor& center, const LossWeights& w) {
  Tensor t = mul_scalar(discr, w.discr_weight);
  t = add(t, mul_scalar(vae, w.lambda1));
  t = add(t, mul_scalar(corr_l, w.lambda2));
  t = add(t, mul_scalar(dist, w.lambda3));
  t = add(t, mul_scalar(center, w.lambda4));
  return t;
}

// Scalar-side twin of total_loss with the same evaluation order, so a
// report's total always equals the graph value bit for bit.
inline LossReport make_report(double rec, double kl, double corr_l, double dist, double discr,
                              double center, const LossWeights& w) {
  LossReport r;
  r.rec = rec;
  r.kl = kl;
  r.vae = rec + kl;
  r.corr = corr_l;
  r.dist = dist;
  r.discr = discr;
  r.center = center;
  r.total = w.discr_weight * discr;
  r.total = r.total + w.lambda1 * r.vae;
  r.total = r.total + w.lambda2 * corr_l;
  r.total = r.total + w.lambda3 * dist;
  r.total = r.total + w.lambda4 * center;
  return r;
}

}  // namespace avret
