#pragma once

#include <cmath>
#include <vector>

#include "ptec/masking.hpp"
#include "ptec/objective.hpp"

namespace ptec {

/// Toy masked-prediction objective: a per-frame MLP (tanh hidden layer)
/// predicts the random-quantizer label of the clean frame from the masked
/// input, cross-entropy averaged over masked frames only.
///
/// Targets come from the clean input; masks are derived from a per-sample
/// content hash mixed with the model's mask seed, so evaluation is
/// deterministic given (params, batch) and invariant to sample order.
class MaskedPredictionModel : public SourceObjective {
 public:
  MaskedPredictionModel(int feature_dim, int hidden_dim, int codebook_size,
                        int code_dim, MaskSpec mask_spec, std::uint64_t seed,
                        int source_id)
      : feature_dim_(feature_dim),
        hidden_dim_(hidden_dim),
        num_classes_(codebook_size),
        mask_spec_(mask_spec),
        quantizer_(feature_dim, code_dim, codebook_size, seed),
        mask_seed_(mix_seed(seed, 0x6d61736bULL)),
        source_id_(source_id) {
    if (feature_dim < 1 || hidden_dim < 1 || codebook_size < 2)
      throw ContractViolation("MaskedPredictionModel: bad layer sizes");
    validate(mask_spec_);
  }

  int source_id() const override { return source_id_; }

  // Parameter layout: W1 (H x F) | b1 (H) | W2 (C x H) | b2 (C), row-major.
  std::size_t dim() const override {
    const std::size_t H = static_cast<std::size_t>(hidden_dim_);
    const std::size_t F = static_cast<std::size_t>(feature_dim_);
    const std::size_t C = static_cast<std::size_t>(num_classes_);
    return H * F + H + C * H + C;
  }

  int feature_dim() const { return feature_dim_; }
  int hidden_dim() const { return hidden_dim_; }
  int num_classes() const { return num_classes_; }
  const MaskSpec& mask_spec() const { return mask_spec_; }
  const RandomQuantizer& quantizer() const { return quantizer_; }

  double loss(const ParamVector& params, const Batch& batch) const override {
    return forward(params, batch, nullptr).loss;
  }

  GradVector grad(const ParamVector& params, const Batch& batch) const override {
    GradVector g(dim(), 0.0);
    forward(params, batch, &g);
    return g;
  }

  Evaluation evaluate(const ParamVector& params,
                      const Batch& batch) const override {
    GradVector g(dim(), 0.0);
    const ForwardResult r = forward(params, batch, &g);
    return Evaluation{r.loss, std::move(g), r.degenerate};
  }

  std::pair<Sample, std::vector<int>> mask_sample(const Sample& s,
                                                  std::uint64_t salt) const {
    std::mt19937_64 rng(mix_seed(mask_seed_, sample_hash(s), salt));
    return apply_masking(s, mask_spec_, rng);
  }

 private:
  struct ForwardResult {
    double loss = 0.0;
    bool degenerate = false;
  };

  ForwardResult forward(const ParamVector& params, const Batch& batch,
                        GradVector* grad_out) const {
    require_same_dim(params.dim(), dim(), "MaskedPredictionModel");
    if (batch.samples.empty())
      throw ContractViolation("MaskedPredictionModel: empty batch");

    const int H = hidden_dim_, F = feature_dim_, C = num_classes_;
    const double* W1 = params.values.data();
    const double* b1 = W1 + static_cast<std::size_t>(H) * F;
    const double* W2 = b1 + H;
    const double* b2 = W2 + static_cast<std::size_t>(C) * H;

    double* dW1 = nullptr;
    double* db1 = nullptr;
    double* dW2 = nullptr;
    double* db2 = nullptr;
    if (grad_out) {
      dW1 = grad_out->values.data();
      db1 = dW1 + static_cast<std::size_t>(H) * F;
      dW2 = db1 + H;
      db2 = dW2 + static_cast<std::size_t>(C) * H;
    }

    double total = 0.0;
    std::size_t masked_frames = 0;
    std::vector<double> hidden(static_cast<std::size_t>(H));
    std::vector<double> probs(static_cast<std::size_t>(C));
    std::vector<double> dpre(static_cast<std::size_t>(H));

    // Degenerate all-unmasked batches resample masks once (salt 1); a second
    // empty draw contributes zero loss and gradient with the flag set.
    for (std::uint64_t salt = 0; salt < 2 && masked_frames == 0; ++salt) {
      total = 0.0;
      if (grad_out)
        std::fill(grad_out->values.begin(), grad_out->values.end(), 0.0);
      for (const Sample& clean : batch.samples) {
        if (clean.feature_dim != F)
          throw ContractViolation("MaskedPredictionModel: feature_dim mismatch");
        auto [masked, idx] = mask_sample(clean, salt);
        if (idx.empty()) continue;
        const std::vector<int> labels = quantize_targets(quantizer_, clean);
        for (int t : idx) {
          ++masked_frames;
          // forward: h = tanh(W1 x + b1), logits = W2 h + b2
          for (int i = 0; i < H; ++i) {
            double a = b1[i];
            const double* w = W1 + static_cast<std::size_t>(i) * F;
            for (int d = 0; d < F; ++d) a += w[d] * masked.at(t, d);
            hidden[static_cast<std::size_t>(i)] = std::tanh(a);
          }
          double zmax = -std::numeric_limits<double>::infinity();
          for (int c = 0; c < C; ++c) {
            double z = b2[c];
            const double* w = W2 + static_cast<std::size_t>(c) * H;
            for (int i = 0; i < H; ++i) z += w[i] * hidden[static_cast<std::size_t>(i)];
            probs[static_cast<std::size_t>(c)] = z;
            zmax = std::max(zmax, z);
          }
          double zsum = 0.0;
          for (int c = 0; c < C; ++c) {
            probs[static_cast<std::size_t>(c)] =
                std::exp(probs[static_cast<std::size_t>(c)] - zmax);
            zsum += probs[static_cast<std::size_t>(c)];
          }
          const int y = labels[static_cast<std::size_t>(t)];
          total += -(std::log(probs[static_cast<std::size_t>(y)]) - std::log(zsum));
          if (!grad_out) continue;
          // backward
          std::fill(dpre.begin(), dpre.end(), 0.0);
          for (int c = 0; c < C; ++c) {
            const double dz =
                probs[static_cast<std::size_t>(c)] / zsum - (c == y ? 1.0 : 0.0);
            db2[c] += dz;
            double* dw = dW2 + static_cast<std::size_t>(c) * H;
            const double* w = W2 + static_cast<std::size_t>(c) * H;
            for (int i = 0; i < H; ++i) {
              dw[i] += dz * hidden[static_cast<std::size_t>(i)];
              dpre[static_cast<std::size_t>(i)] += dz * w[i];
            }
          }
          for (int i = 0; i < H; ++i) {
            const double h = hidden[static_cast<std::size_t>(i)];
            const double d = dpre[static_cast<std::size_t>(i)] * (1.0 - h * h);
            db1[i] += d;
            double* dw = dW1 + static_cast<std::size_t>(i) * F;
            for (int dd = 0; dd < F; ++dd) dw[dd] += d * masked.at(t, dd);
          }
        }
      }
    }

    if (masked_frames == 0) return ForwardResult{0.0, true};
    const double inv = 1.0 / static_cast<double>(masked_frames);
    if (grad_out) scale_inplace(*grad_out, inv);
    return ForwardResult{total * inv, false};
  }

  int feature_dim_;
  int hidden_dim_;
  int num_classes_;
  MaskSpec mask_spec_;
  RandomQuantizer quantizer_;
  std::uint64_t mask_seed_;
  int source_id_;
};

/// masked_prediction_loss_grad in one call; `degenerate` reports an
/// all-unmasked batch after the single resample.
inline SourceObjective::Evaluation masked_prediction_loss_grad(
    const MaskedPredictionModel& model, const ParamVector& params,
    const Batch& batch) {
  return model.evaluate(params, batch);
}

}  // namespace ptec
