#pragma once
// The dual-branch variational model. Each modality has its own encoder into
// a shared hidden width; a single pair of mean/log-variance heads and a
// single linear classifier are shared by both branches, which is what ties
// the two latent spaces together. Decoders are per-modality three-layer
// stacks back to the input dimensionality. Class centers live alongside the
// parameters but are updated by a running rule, not by gradient descent.
//
// Checkpoint format: magic "AVCK", u16 version, the six config fields, then
// a named-tensor table (u64 count; per tensor u64 name length, name bytes,
// u64 rows, u64 cols, row-major little-endian f64). Extra tensors such as
// standardization statistics ride along by name.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "avret/data.hpp"
#include "avret/serialize.hpp"
#include "avret/tensor.hpp"

namespace avret {

enum class Activation : std::uint8_t { identity = 0, tanh = 1 };

struct ModelConfig {
  std::size_t d_visual = 1024;
  std::size_t d_audio = 128;
  std::size_t hidden = 512;
  std::size_t latent = 64;
  std::size_t classes = 10;
  Activation activation = Activation::identity;  // applied to hidden layers only

  void validate() const {
    if (d_visual < 1 || d_audio < 1 || hidden < 1 || latent < 1 || classes < 1)
      throw std::invalid_argument("model config: all dimensions must be positive");
    if (latent > hidden)
      throw std::invalid_argument("model config: latent width " + std::to_string(latent) +
                                  " exceeds hidden width " + std::to_string(hidden));
  }
};

struct LatentCode {
  Tensor mu;
  Tensor log_var;
};

struct ModelParams {
  ModelConfig config;

  Tensor enc_v_w, enc_v_b;  // d_visual -> hidden
  Tensor enc_a_w, enc_a_b;  // d_audio -> hidden
  Tensor mu_w, mu_b;        // hidden -> latent, shared across modalities
  Tensor logvar_w, logvar_b;
  Tensor cls_w, cls_b;      // latent -> classes, shared across modalities
  Tensor dec_v_w1, dec_v_b1, dec_v_w2, dec_v_b2, dec_v_w3, dec_v_b3;
  Tensor dec_a_w1, dec_a_b1, dec_a_w2, dec_a_b2, dec_a_w3, dec_a_b3;
  Tensor centers;  // classes x latent, rule-updated

  // Gradient-trained tensors in a fixed order shared by the optimizer and
  // the checkpoint writer.
  std::vector<std::pair<std::string, Tensor*>> trainable() {
    return {
        {"enc_v_w", &enc_v_w},   {"enc_v_b", &enc_v_b},   {"enc_a_w", &enc_a_w},
        {"enc_a_b", &enc_a_b},   {"mu_w", &mu_w},         {"mu_b", &mu_b},
        {"logvar_w", &logvar_w}, {"logvar_b", &logvar_b}, {"cls_w", &cls_w},
        {"cls_b", &cls_b},       {"dec_v_w1", &dec_v_w1}, {"dec_v_b1", &dec_v_b1},
        {"dec_v_w2", &dec_v_w2}, {"dec_v_b2", &dec_v_b2}, {"dec_v_w3", &dec_v_w3},
        {"dec_v_b3", &dec_v_b3}, {"dec_a_w1", &dec_a_w1}, {"dec_a_b1", &dec_a_b1},
        {"dec_a_w2", &dec_a_w2}, {"dec_a_b2", &dec_a_b2}, {"dec_a_w3", &dec_a_w3},
        {"dec_a_b3", &dec_a_b3},
    };
  }

  std::vector<std::pair<std::string, Tensor*>> all() {
    auto v = trainable();
    v.push_back({"centers", &centers});
    return v;
  }
};

namespace detail {

inline Tensor init_weight(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(fan_in * fan_out);
  for (double& x : v) x = dist(rng);
  return Tensor::parameter(fan_in, fan_out, std::move(v));
}

inline Tensor init_bias(std::size_t width) {
  return Tensor::parameter(1, width, std::vector<double>(width, 0.0));
}

}  // namespace detail

// Fan-in-scaled uniform weights, zero biases, zero centers; the draw order
// is fixed so a seed pins every parameter bit.
inline ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(mix_seed(seed, 0x6d6f64656cULL));
  ModelParams p;
  p.config = config;
  const std::size_t dv = config.d_visual, da = config.d_audio, h = config.hidden,
                    o = config.latent, c = config.classes;
  p.enc_v_w = detail::init_weight(dv, h, rng);
  p.enc_v_b = detail::init_bias(h);
  p.enc_a_w = detail::init_weight(da, h, rng);
  p.enc_a_b = detail::init_bias(h);
  p.mu_w = detail::init_weight(h, o, rng);
  p.mu_b = detail::init_bias(o);
  p.logvar_w = detail::init_weight(h, o, rng);
  p.logvar_b = detail::init_bias(o);
  p.cls_w = detail::init_weight(o, c, rng);
  p.cls_b = detail::init_bias(c);
  p.dec_v_w1 = detail::init_weight(o, o, rng);
  p.dec_v_b1 = detail::init_bias(o);
  p.dec_v_w2 = detail::init_weight(o, h, rng);
  p.dec_v_b2 = detail::init_bias(h);
  p.dec_v_w3 = detail::init_weight(h, dv, rng);
  p.dec_v_b3 = detail::init_bias(dv);
  p.dec_a_w1 = detail::init_weight(o, o, rng);
  p.dec_a_b1 = detail::init_bias(o);
  p.dec_a_w2 = detail::init_weight(o, h, rng);
  p.dec_a_b2 = detail::init_bias(h);
  p.dec_a_w3 = detail::init_weight(h, da, rng);
  p.dec_a_b3 = detail::init_bias(da);
  p.centers = Tensor::zeros(c, o);
  return p;
}

// All-zero twin of init_model, useful as a smoke test for bias plumbing and
// as the target shape when loading a checkpoint.
inline ModelParams zero_model(const ModelConfig& config) {
  config.validate();
  ModelParams p;
  p.config = config;
  auto zero_param = [](std::size_t r, std::size_t c) {
    return Tensor::parameter(r, c, std::vector<double>(r * c, 0.0));
  };
  const std::size_t dv = config.d_visual, da = config.d_audio, h = config.hidden,
                    o = config.latent, c = config.classes;
  p.enc_v_w = zero_param(dv, h);
  p.enc_v_b = zero_param(1, h);
  p.enc_a_w = zero_param(da, h);
  p.enc_a_b = zero_param(1, h);
  p.mu_w = zero_param(h, o);
  p.mu_b = zero_param(1, o);
  p.logvar_w = zero_param(h, o);
  p.logvar_b = zero_param(1, o);
  p.cls_w = zero_param(o, c);
  p.cls_b = zero_param(1, c);
  p.dec_v_w1 = zero_param(o, o);
  p.dec_v_b1 = zero_param(1, o);
  p.dec_v_w2 = zero_param(o, h);
  p.dec_v_b2 = zero_param(1, h);
  p.dec_v_w3 = zero_param(h, dv);
  p.dec_v_b3 = zero_param(1, dv);
  p.dec_a_w1 = zero_param(o, o);
  p.dec_a_b1 = zero_param(1, o);
  p.dec_a_w2 = zero_param(o, h);
  p.dec_a_b2 = zero_param(1, h);
  p.dec_a_w3 = zero_param(h, da);
  p.dec_a_b3 = zero_param(1, da);
  p.centers = Tensor::zeros(c, o);
  return p;
}

namespace detail {

inline Tensor activate(const Tensor& t, Activation a) {
  return a == Activation::tanh ? avret::tanh(t) : t;
}

inline Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add(matmul(x, w), b);
}

}  // namespace detail

// Per-modality encoder into the shared mean / log-variance heads.
inline LatentCode encode(const ModelParams& p, const Tensor& x, Modality m) {
  std::size_t want = m == Modality::visual ? p.config.d_visual : p.config.d_audio;
  if (x.cols() != want)
    throw std::invalid_argument(std::string("encode: ") + to_string(m) +
                                " features must have " + std::to_string(want) +
                                " columns, got " + std::to_string(x.cols()));
  const Tensor& w = m == Modality::visual ? p.enc_v_w : p.enc_a_w;
  const Tensor& b = m == Modality::visual ? p.enc_v_b : p.enc_a_b;
  Tensor h = detail::activate(detail::affine(x, w, b), p.config.activation);
  return {detail::affine(h, p.mu_w, p.mu_b), detail::affine(h, p.logvar_w, p.logvar_b)};
}

// z = mu + exp(log_var / 2) * eps; eps enters as a constant, so gradients
// flow only through the mean and log-variance.
inline Tensor reparameterize(const LatentCode& code, const Tensor& eps) {
  if (eps.rows() != code.mu.rows() || eps.cols() != code.mu.cols())
    throw std::invalid_argument("reparameterize: eps shape does not match the latent code");
  return add(code.mu, mul(exp(mul_scalar(code.log_var, 0.5)), eps));
}

// The one classifier both modalities share; logits, no softmax.
inline Tensor classify(const ModelParams& p, const Tensor& z) {
  if (z.cols() != p.config.latent)
    throw std::invalid_argument("classify: expected " + std::to_string(p.config.latent) +
                                " latent columns, got " + std::to_string(z.cols()));
  return detail::affine(z, p.cls_w, p.cls_b);
}

inline Tensor decode(const ModelParams& p, const Tensor& z, Modality m) {
  if (z.cols() != p.config.latent)
    throw std::invalid_argument("decode: expected " + std::to_string(p.config.latent) +
                                " latent columns, got " + std::to_string(z.cols()));
  const bool vis = m == Modality::visual;
  const Tensor& w1 = vis ? p.dec_v_w1 : p.dec_a_w1;
  const Tensor& b1 = vis ? p.dec_v_b1 : p.dec_a_b1;
  const Tensor& w2 = vis ? p.dec_v_w2 : p.dec_a_w2;
  const Tensor& b2 = vis ? p.dec_v_b2 : p.dec_a_b2;
  const Tensor& w3 = vis ? p.dec_v_w3 : p.dec_a_w3;
  const Tensor& b3 = vis ? p.dec_v_b3 : p.dec_a_b3;
  Tensor h1 = detail::activate(detail::affine(z, w1, b1), p.config.activation);
  Tensor h2 = detail::activate(detail::affine(h1, w2, b2), p.config.activation);
  return detail::affine(h2, w3, b3);
}

// Retrieval embeds with the latent mean: deterministic, no sampling.
inline Tensor embed_for_retrieval(const ModelParams& p, const Tensor& x, Modality m) {
  return encode(p, x, m).mu;
}

// ---------------------------------------------------------------------------
// Checkpoints.
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[4] = {'A', 'V', 'C', 'K'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct CheckpointContents {
  ModelParams params;
  std::map<std::string, Tensor> extra;  // e.g. standardization statistics
};

inline void save_checkpoint(const std::filesystem::path& path, ModelParams& params,
                            const std::map<std::string, Tensor>& extra = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(kCheckpointMagic, 4);
  detail::write_u16(out, kCheckpointVersion);
  detail::write_u64(out, params.config.d_visual);
  detail::write_u64(out, params.config.d_audio);
  detail::write_u64(out, params.config.hidden);
  detail::write_u64(out, params.config.latent);
  detail::write_u64(out, params.config.classes);
  out.put(static_cast<char>(params.config.activation));

  auto named = params.all();
  detail::write_u64(out, named.size() + extra.size());
  auto write_tensor = [&](const std::string& name, const Tensor& t) {
    detail::write_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_u64(out, t.rows());
    detail::write_u64(out, t.cols());
    for (double v : t.data()) detail::write_f64(out, v);
  };
  for (auto& [name, t] : named) write_tensor(name, *t);
  for (auto& [name, t] : extra) write_tensor(name, t);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline CheckpointContents load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string() + " for reading");
  char magic[4];
  detail::read_exact(in, magic, 4, "checkpoint magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw std::runtime_error(path.string() + ": bad checkpoint magic");
  std::uint16_t version = detail::read_u16(in, "checkpoint version");
  if (version != kCheckpointVersion)
    throw std::runtime_error(path.string() + ": unsupported checkpoint version " +
                             std::to_string(version));
  ModelConfig config;
  config.d_visual = detail::read_u64(in, "d_visual");
  config.d_audio = detail::read_u64(in, "d_audio");
  config.hidden = detail::read_u64(in, "hidden");
  config.latent = detail::read_u64(in, "latent");
  config.classes = detail::read_u64(in, "classes");
  char act;
  detail::read_exact(in, &act, 1, "activation");
  if (act != 0 && act != 1)
    throw std::runtime_error(path.string() + ": unknown activation code " +
                             std::to_string(static_cast<int>(act)));
  config.activation = static_cast<Activation>(act);

  std::uint64_t count = detail::read_u64(in, "tensor count");
  std::map<std::string, Tensor> found;
  for (std::uint64_t t = 0; t < count; ++t) {
    std::uint64_t len = detail::read_u64(in, "tensor name length");
    std::string name(len, '\0');
    detail::read_exact(in, name.data(), len, "tensor name");
    std::uint64_t rows = detail::read_u64(in, "tensor rows");
    std::uint64_t cols = detail::read_u64(in, "tensor cols");
    std::vector<double> data(rows * cols);
    for (double& v : data) v = detail::read_f64(in, "tensor value");
    found.emplace(name, Tensor::from_data(rows, cols, std::move(data)));
  }

  CheckpointContents out;
  out.params = zero_model(config);
  for (auto& [name, slot] : out.params.all()) {
    auto it = found.find(name);
    if (it == found.end())
      throw std::runtime_error(path.string() + ": checkpoint is missing tensor '" + name + "'");
    if (it->second.rows() != slot->rows() || it->second.cols() != slot->cols())
      throw std::runtime_error(path.string() + ": tensor '" + name + "' is " +
                               detail::shape_str(it->second.rows(), it->second.cols()) +
                               ", expected " + detail::shape_str(slot->rows(), slot->cols()));
    *slot = name == "centers" ? it->second : Tensor::parameter(it->second);
    found.erase(it);
  }
  out.extra = std::move(found);
  return out;
}

}  // namespace avret
