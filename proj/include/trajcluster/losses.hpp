#pragma once

#include <vector>

#include "trajcluster/autodiff.hpp"
#include "trajcluster/tensor.hpp"

namespace trajcluster::loss {

/// Weights of the combined objective. The KL term is carried as its own
/// weighted term; w_b balances the binary block inside the reconstruction.
struct LossWeights {
  double w_r = 0.5;
  double w_y = 0.0;
  double w_c = 0.25;
  double w_kl = 1e-5;
  double w_b = 1.0;

  void validate() const;
};

/// Masked reconstruction loss: squared error over valid continuous entries
/// plus w_b times the cross-entropy over valid binary entries (predictions
/// clamped to [eps, 1-eps], eps = 1e-7), each summed per patient and
/// averaged over the batch. Masks are elementwise over the same flattened
/// shape as x; a term with an empty mask contributes 0.
ad::Var recon_loss(ad::Var x_hat, const Tensor& x, const Tensor& valid_cont,
                   const Tensor& valid_bin, double w_b);
double recon_loss_value(const Tensor& x_hat, const Tensor& x, const Tensor& valid_cont,
                        const Tensor& valid_bin, double w_b);

/// Gaussian KL against the unit normal, summed over latent dimensions and
/// averaged over the batch.
ad::Var kl_loss(ad::Var mu, ad::Var logvar);
double kl_loss_value(const Tensor& mu, const Tensor& logvar);

/// Negative mean Cox partial likelihood (risk sets use >= on times). An
/// all-censored batch yields 0 and a warning on stderr.
ad::Var cox_loss(ad::Var risks, const std::vector<double>& times, const std::vector<int>& events,
                 bool* all_censored = nullptr);
double cox_loss_value(const std::vector<double>& risks, const std::vector<double>& times,
                      const std::vector<int>& events);

/// Self-training KL divergence (1/N) sum_n KL(p_n || q_n); P is a constant
/// target, gradients flow through Q only.
ad::Var cluster_loss(const Tensor& p_target, ad::Var q);
double cluster_loss_value(const Tensor& p, const Tensor& q);

struct LossComponents {
  ad::Var recon;    // invalid when unused
  ad::Var kl;
  ad::Var outcome;
  ad::Var cluster;
};

/// w_r*L_r + w_kl*L_KL + w_y*L_y + w_c*L_c over whichever components are
/// present; throws naming the component if one is non-finite.
ad::Var total_loss(ad::Graph& g, const LossComponents& parts, const LossWeights& weights);

}  // namespace trajcluster::loss
