#pragma once
// Bias-corrected Adam, the warmup/decay learning-rate schedule, and the
// two-stage training loop: a variational-only pretraining phase followed by
// full-objective training. Each phase restarts the schedule's epoch counter
// and owns a fresh optimizer; everything random (shuffles, noise draws)
// derives from the run seed plus a phase salt, so a seed pins the entire
// run bit for bit.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "avret/data.hpp"
#include "avret/losses.hpp"
#include "avret/model.hpp"
#include "avret/tensor.hpp"

namespace avret {

// ---------------------------------------------------------------------------
// Adam.
// ---------------------------------------------------------------------------

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step_count = 0;
  // name -> (first moment, second moment), shapes matching the parameter
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments;
};

// One bias-corrected update over every named parameter. grad_scale lets the
// caller apply global-norm clipping without touching stored gradients.
inline void adam_step(AdamState& st, const std::vector<std::pair<std::string, Tensor*>>& params,
                      double lr, double grad_scale = 1.0) {
  if (lr < 0.0) throw std::invalid_argument("adam_step: negative learning rate");
  st.step_count += 1;
  double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
  double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));
  for (auto& [name, t] : params) {
    if (!t->is_parameter())
      throw std::logic_error("adam_step: '" + name + "' is not a parameter");
    const std::vector<double>& g = t->grad();
    auto& [m, v] = st.moments[name];
    if (m.empty()) {
      m.assign(g.size(), 0.0);
      v.assign(g.size(), 0.0);
    } else if (m.size() != g.size()) {
      throw std::logic_error("adam_step: moment shape mismatch for '" + name + "'");
    }
    std::vector<double> next = t->data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      double gi = g[i] * grad_scale;
      m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * gi;
      v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * gi * gi;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      next[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
    }
    *t = Tensor::parameter(t->rows(), t->cols(), std::move(next));
  }
}

// ---------------------------------------------------------------------------
// Learning-rate schedule.
// ---------------------------------------------------------------------------

struct Schedule {
  double base_lr = 3.5e-5;
  double peak_lr = 3.5e-4;
  int warmup_epochs = 10;
  int decay1_epoch = 40;
  double decay1_lr = 3.5e-5;
  int decay2_epoch = 70;
  double decay2_lr = 3.5e-6;
};

// Linear warmup, then three flat plateaus. Plateau values are returned as
// stored literals, never recomputed, so they compare exactly.
inline double lr_at(const Schedule& s, int epoch) {
  if (epoch < 0) throw std::invalid_argument("lr_at: negative epoch");
  if (epoch < s.warmup_epochs)
    return s.base_lr + (s.peak_lr - s.base_lr) *
                           (static_cast<double>(epoch) / static_cast<double>(s.warmup_epochs));
  if (epoch < s.decay1_epoch) return s.peak_lr;
  if (epoch < s.decay2_epoch) return s.decay1_lr;
  return s.decay2_lr;
}

// ---------------------------------------------------------------------------
// Training loop.
// ---------------------------------------------------------------------------

struct TrainRunConfig {
  int pretrain_epochs = 100;
  int full_epochs = 400;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  LossWeights weights{};
  Schedule schedule{};
  double center_alpha = 0.5;
  double grad_clip = 0.0;    // 0 disables; otherwise a global-norm cap
  int checkpoint_every = 0;  // epochs between checkpoint hooks; 0 disables

  void validate(std::size_t dataset_size) const {
    if (pretrain_epochs < 0 || full_epochs < 0)
      throw std::invalid_argument("train config: negative epoch counts");
    if (pretrain_epochs + full_epochs < 1)
      throw std::invalid_argument("train config: at least one epoch required");
    if (batch_size < 1 || batch_size > dataset_size)
      throw std::invalid_argument("train config: batch size " + std::to_string(batch_size) +
                                  " outside [1, " + std::to_string(dataset_size) + "]");
    if (center_alpha < 0.0 || center_alpha > 1.0)
      throw std::invalid_argument("train config: center alpha outside [0, 1]");
    if (grad_clip < 0.0) throw std::invalid_argument("train config: negative gradient cap");
  }
};

enum class TrainPhase { pretrain, full };

struct TrainHooks {
  // phase, epoch within phase, epoch over the whole run, averaged losses
  std::function<void(TrainPhase, int, int, const LossReport&)> on_epoch;
  // one optimizer step per batch; fires right after it
  std::function<void(TrainPhase, int, std::size_t, const LossReport&)> on_batch;
  // called per checkpoint_every epochs (and never for the in-progress model
  // unless the cadence fires); the CLI snapshots to disk here
  std::function<void(int, ModelParams&)> on_checkpoint;
};

namespace detail {

inline void check_finite(const LossReport& r, TrainPhase phase, int epoch, std::size_t batch) {
  auto bad = [&](const char* term) {
    throw std::runtime_error(std::string("training diverged: ") + term + " is not finite (" +
                             (phase == TrainPhase::pretrain ? "pretrain" : "full") + " epoch " +
                             std::to_string(epoch) + ", batch " + std::to_string(batch) + ")");
  };
  if (!std::isfinite(r.rec)) bad("reconstruction loss");
  if (!std::isfinite(r.kl)) bad("kl loss");
  if (!std::isfinite(r.corr)) bad("correlation loss");
  if (!std::isfinite(r.dist)) bad("distance loss");
  if (!std::isfinite(r.discr)) bad("discriminative loss");
  if (!std::isfinite(r.center)) bad("center loss");
  if (!std::isfinite(r.total)) bad("total loss");
}

inline double global_grad_norm(std::vector<std::pair<std::string, Tensor*>>& params) {
  double acc = 0.0;
  for (auto& [name, t] : params)
    for (double g : t->grad()) acc += g * g;
  return std::sqrt(acc);
}

inline Tensor draw_gaussian(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = dist(rng);
  return Tensor::from_data(rows, cols, std::move(v));
}

// One epoch over shuffled batches. Backpropagates the phase objective but
// reports every component, batch-size weighted, with the total recomputed
// from the averaged parts so the report identity holds exactly.
inline LossReport run_epoch(ModelParams& params, const PairedDataset& ds,
                            const TrainRunConfig& cfg, AdamState& adam, TrainPhase phase,
                            int epoch, std::uint64_t phase_seed, const TrainHooks* hooks,
                            std::size_t* degenerate_rows) {
  auto batches = make_batches(ds.size(), cfg.batch_size, phase_seed,
                              static_cast<std::uint64_t>(epoch));
  std::mt19937_64 noise_rng(mix_seed(mix_seed(phase_seed, 0x656e7aULL),
                                     static_cast<std::uint64_t>(epoch)));
  double lr = lr_at(cfg.schedule, epoch);
  auto trainable = params.trainable();

  double wsum = 0.0, rec_acc = 0.0, kl_acc = 0.0, corr_acc = 0.0, dist_acc = 0.0,
         discr_acc = 0.0, center_acc = 0.0;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const auto& index = batches[b];
    Tensor xv = gather_rows(ds.visual, index);
    Tensor xa = gather_rows(ds.audio, index);
    std::vector<int> labels = gather_labels(ds.labels, index);
    Tensor onehot = one_hot_matrix(labels, ds.labels.classes);

    LatentCode code_v = encode(params, xv, Modality::visual);
    LatentCode code_a = encode(params, xa, Modality::audio);
    Tensor eps_v = draw_gaussian(index.size(), params.config.latent, noise_rng);
    Tensor eps_a = draw_gaussian(index.size(), params.config.latent, noise_rng);
    Tensor z_v = reparameterize(code_v, eps_v);
    Tensor z_a = reparameterize(code_a, eps_a);
    Tensor xhat_v = decode(params, z_v, Modality::visual);
    Tensor xhat_a = decode(params, z_a, Modality::audio);
    Tensor pred_v = classify(params, z_v);
    Tensor pred_a = classify(params, z_a);

    Tensor rec = reconstruction_loss(xv, xhat_v, xa, xhat_a);
    Tensor kl = kl_loss(code_v, code_a);
    Tensor vae = add(rec, kl);
    Tensor corr_l = correlation_loss(z_v, z_a, labels, degenerate_rows);
    Tensor dist = distance_loss(z_v, z_a);
    Tensor discr = discriminative_loss(pred_a, pred_v, onehot);
    Tensor cent = center_loss(z_v, z_a, labels, params.centers);
    Tensor total = total_loss(discr, vae, corr_l, dist, cent, cfg.weights);

    LossReport br = make_report(rec.scalar(), kl.scalar(), corr_l.scalar(), dist.scalar(),
                                discr.scalar(), cent.scalar(), cfg.weights);
    check_finite(br, phase, epoch, b);

    for (auto& [name, t] : trainable) t->zero_grad();
    backward(phase == TrainPhase::pretrain ? vae : total);
    double scale = 1.0;
    if (cfg.grad_clip > 0.0) {
      double norm = global_grad_norm(trainable);
      if (norm > cfg.grad_clip) scale = cfg.grad_clip / norm;
    }
    adam_step(adam, trainable, lr, scale);
    // adam_step replaced the parameter tensors; re-bind before the next batch
    trainable = params.trainable();
    if (phase == TrainPhase::full)
      params.centers = update_centers(params.centers, z_v, z_a, labels, cfg.center_alpha);
    if (hooks && hooks->on_batch) hooks->on_batch(phase, epoch, b, br);

    double bw = static_cast<double>(index.size());
    wsum += bw;
    rec_acc += bw * br.rec;
    kl_acc += bw * br.kl;
    corr_acc += bw * br.corr;
    dist_acc += bw * br.dist;
    discr_acc += bw * br.discr;
    center_acc += bw * br.center;
  }
  return make_report(rec_acc / wsum, kl_acc / wsum, corr_acc / wsum, dist_acc / wsum,
                     discr_acc / wsum, center_acc / wsum, cfg.weights);
}

inline std::vector<LossReport> run_phase(ModelParams& params, const PairedDataset& ds,
                                         const TrainRunConfig& cfg, TrainPhase phase,
                                         int epochs, int global_epoch_base,
                                         const TrainHooks* hooks,
                                         std::size_t* degenerate_rows) {
  std::uint64_t phase_seed =
      mix_seed(cfg.seed, phase == TrainPhase::pretrain ? 0x706872455f31ULL : 0x706872455f32ULL);
  AdamState adam;
  std::vector<LossReport> history;
  history.reserve(static_cast<std::size_t>(epochs));
  for (int e = 0; e < epochs; ++e) {
    LossReport r =
        run_epoch(params, ds, cfg, adam, phase, e, phase_seed, hooks, degenerate_rows);
    history.push_back(r);
    int global_epoch = global_epoch_base + e;
    if (hooks && hooks->on_epoch) hooks->on_epoch(phase, e, global_epoch, r);
    if (hooks && hooks->on_checkpoint && cfg.checkpoint_every > 0 &&
        (global_epoch + 1) % cfg.checkpoint_every == 0)
      hooks->on_checkpoint(global_epoch, params);
  }
  return history;
}

}  // namespace detail

// Phase one of the two-stage procedure: minimize reconstruction + KL only.
// The full objective is still evaluated for the per-epoch reports, and the
// classifier and centers stay untouched (their gradients are zero).
inline std::vector<LossReport> pretrain_vae(ModelParams& params, const PairedDataset& ds,
                                            const TrainRunConfig& cfg,
                                            const TrainHooks* hooks = nullptr,
                                            std::size_t* degenerate_rows = nullptr) {
  cfg.validate(ds.size());
  return detail::run_phase(params, ds, cfg, TrainPhase::pretrain, cfg.pretrain_epochs, 0,
                           hooks, degenerate_rows);
}

// Phase two: minimize the weighted total objective, updating class centers
// after every optimizer step.
inline std::vector<LossReport> train_full(ModelParams& params, const PairedDataset& ds,
                                          const TrainRunConfig& cfg,
                                          const TrainHooks* hooks = nullptr,
                                          std::size_t* degenerate_rows = nullptr) {
  cfg.validate(ds.size());
  return detail::run_phase(params, ds, cfg, TrainPhase::full, cfg.full_epochs,
                           cfg.pretrain_epochs, hooks, degenerate_rows);
}

// Both phases back to back; returns the concatenated history.
inline std::vector<LossReport> train_two_stage(ModelParams& params, const PairedDataset& ds,
                                               const TrainRunConfig& cfg,
                                               const TrainHooks* hooks = nullptr,
                                               std::size_t* degenerate_rows = nullptr) {
  std::vector<LossReport> history = pretrain_vae(params, ds, cfg, hooks, degenerate_rows);
  std::vector<LossReport> full = train_full(params, ds, cfg, hooks, degenerate_rows);
  history.insert(history.end(), full.begin(), full.end());
  return history;
}

}  // namespace avret
