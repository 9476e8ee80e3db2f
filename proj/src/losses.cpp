#include "trajcluster/losses.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>
#include <string>

namespace trajcluster::loss {

namespace {
constexpr double kBceEps = 1e-7;

double mask_count(const Tensor& mask) {
  double c = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i) c += mask[i] != 0.0 ? 1.0 : 0.0;
  return c;
}
}  // namespace

void LossWeights::validate() const {
  for (double w : {w_r, w_y, w_c, w_kl, w_b})
    if (w < 0.0) throw std::invalid_argument("LossWeights: weights must be >= 0");
  if (w_r == 0.0 && w_y == 0.0 && w_c == 0.0 && w_kl == 0.0)
    throw std::invalid_argument("LossWeights: at least one weight must be > 0");
}

ad::Var recon_loss(ad::Var x_hat, const Tensor& x, const Tensor& valid_cont,
                   const Tensor& valid_bin, double w_b) {
  const Tensor& pred = x_hat.value();
  if (!pred.same_shape(x) || !pred.same_shape(valid_cont) || !pred.same_shape(valid_bin))
    throw std::invalid_argument("recon_loss: shape mismatch");
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (valid_bin[i] != 0.0 && (pred[i] < 0.0 || pred[i] > 1.0))
      throw std::domain_error("recon_loss: binary prediction outside [0, 1] at entry " +
                              std::to_string(i));

  ad::Graph& g = *x_hat.graph();
  const double n_cont = mask_count(valid_cont);
  const double n_bin = mask_count(valid_bin);
  // Per-patient sums over valid entries, averaged over the batch; this keeps
  // the term on the same scale as the other losses under the default weights.
  const double inv_batch = 1.0 / std::max(1, x.rows());

  ad::Var total = g.constant(Tensor(1, 1, 0.0));
  if (n_cont > 0.0) {
    ad::Var diff = ad::sub(x_hat, g.constant(x));
    ad::Var sq = ad::mul(diff, diff);
    ad::Var masked = ad::mul(sq, g.constant(valid_cont));
    total = ad::add(total, ad::scale(ad::sum_all(masked), inv_batch));
  }
  if (n_bin > 0.0 && w_b != 0.0) {
    ad::Var p = ad::clamp(x_hat, kBceEps, 1.0 - kBceEps);
    Tensor ones(x.rows(), x.cols(), 1.0);
    ad::Var term = ad::add(ad::mul(g.constant(x), ad::log_(p)),
                           ad::mul(ad::sub(g.constant(ones), g.constant(x)),
                                   ad::log_(ad::sub(g.constant(ones), p))));
    ad::Var masked = ad::mul(term, g.constant(valid_bin));
    total = ad::add(total, ad::scale(ad::sum_all(masked), -w_b * inv_batch));
  }
  return total;
}

double recon_loss_value(const Tensor& x_hat, const Tensor& x, const Tensor& valid_cont,
                        const Tensor& valid_bin, double w_b) {
  ad::Graph g;
  return recon_loss(g.constant(x_hat), x, valid_cont, valid_bin, w_b).value()(0, 0);
}

ad::Var kl_loss(ad::Var mu, ad::Var logvar) {
  if (!mu.value().same_shape(logvar.value()))
    throw std::invalid_argument("kl_loss: shape mismatch (" + mu.value().shape_str() + " vs " +
                                logvar.value().shape_str() + ")");
  ad::Graph& g = *mu.graph();
  const int n = mu.value().rows();
  // -(1/2N) sum (1 + logvar - mu^2 - exp(logvar))
  ad::Var term = ad::add_scalar(ad::sub(ad::sub(logvar, ad::mul(mu, mu)), ad::exp_(logvar)), 1.0);
  (void)g;
  return ad::scale(ad::sum_all(term), -0.5 / std::max(1, n));
}

double kl_loss_value(const Tensor& mu, const Tensor& logvar) {
  ad::Graph g;
  return kl_loss(g.constant(mu), g.constant(logvar)).value()(0, 0);
}

ad::Var cox_loss(ad::Var risks, const std::vector<double>& times, const std::vector<int>& events,
                 bool* all_censored) {
  bool flag = false;
  ad::Var out = ad::cox_neg_partial_likelihood(risks, times, events, &flag);
  if (flag) std::cerr << "warning: cox_loss on an all-censored batch contributes 0\n";
  if (all_censored) *all_censored = flag;
  return out;
}

double cox_loss_value(const std::vector<double>& risks, const std::vector<double>& times,
                      const std::vector<int>& events) {
  ad::Graph g;
  Tensor r(static_cast<int>(risks.size()), 1);
  for (std::size_t i = 0; i < risks.size(); ++i) r(static_cast<int>(i), 0) = risks[i];
  return cox_loss(g.constant(r), times, events).value()(0, 0);
}

ad::Var cluster_loss(const Tensor& p_target, ad::Var q) {
  const Tensor& qv = q.value();
  if (!qv.same_shape(p_target)) throw std::invalid_argument("cluster_loss: shape mismatch");
  for (std::size_t i = 0; i < qv.size(); ++i) {
    if (qv[i] <= 0.0)
      throw std::domain_error("cluster_loss: zero assignment probability at entry " +
                              std::to_string(i));
    if (p_target[i] < 0.0) throw std::domain_error("cluster_loss: negative target probability");
  }
  ad::Graph& g = *q.graph();
  const int n = p_target.rows();

  double p_log_p = 0.0;
  for (std::size_t i = 0; i < p_target.size(); ++i)
    if (p_target[i] > 0.0) p_log_p += p_target[i] * std::log(p_target[i]);

  ad::Var cross = ad::sum_all(ad::mul(g.constant(p_target), ad::log_(q)));
  return ad::scale(ad::add_scalar(ad::scale(cross, -1.0), p_log_p), 1.0 / std::max(1, n));
}

double cluster_loss_value(const Tensor& p, const Tensor& q) {
  ad::Graph g;
  return cluster_loss(p, g.constant(q)).value()(0, 0);
}

ad::Var total_loss(ad::Graph& g, const LossComponents& parts, const LossWeights& weights) {
  weights.validate();
  ad::Var total = g.constant(Tensor(1, 1, 0.0));
  auto accumulate = [&](ad::Var part, double w, const char* name) {
    if (!part.valid()) {
      if (w != 0.0)
        throw std::invalid_argument(std::string("total_loss: missing component ") + name +
                                    " with nonzero weight");
      return;
    }
    const double v = part.value()(0, 0);
    if (!std::isfinite(v))
      throw std::domain_error(std::string("total_loss: non-finite component ") + name);
    if (w != 0.0) total = ad::add(total, ad::scale(part, w));
  };
  accumulate(parts.recon, weights.w_r, "reconstruction");
  accumulate(parts.kl, weights.w_kl, "kl");
  accumulate(parts.outcome, weights.w_y, "outcome");
  accumulate(parts.cluster, weights.w_c, "cluster");
  return total;
}

}  // namespace trajcluster::loss
