#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "evmost/distributions.hpp"
#include "evmost/fusion.hpp"

namespace evmost {

/// Default weight of the cross-entropy term.
inline constexpr double kDefaultLambda = 0.5;

struct NIGGrad {
  double gamma = 0.0;
  double delta = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
};

/// Per-modality NIG terms, the fused Student's t term and their sum.
struct LossBreakdown {
  std::vector<double> per_modality_nig;
  double fused_st = 0.0;
  double total = 0.0;
  double lambda = kDefaultLambda;
};

/// Negative log marginal likelihood of y under the NIG evidential prior:
///   log(Gamma(a) sqrt(pi / d) / Gamma(a + 1/2)) - a log(2 b (1 + d))
///     + (a + 1/2) log((y - g)^2 d + 2 b (1 + d))
double nig_nll(const NIGParams& p, double y);
NIGGrad nig_nll_grad(const NIGParams& p, double y);

/// Negative log-likelihood of y under St(u, sigma, v):
///   log(sigma)/2 + log(Gamma(v/2) / Gamma((v+1)/2)) + log sqrt(v pi)
///     + (v+1)/2 log(1 + (y - u)^2 / (v sigma))
/// sigma is the squared scale, so this is exactly -student_t_logpdf and equals
/// nig_nll(p, y) when st = nig_to_student_t(p).
double student_t_nll(const StudentT& st, double y);
StudentTGrad student_t_nll_grad(const StudentT& st, double y);

/// -log softmax(logits)[label], via log-sum-exp.
double cross_entropy(std::span<const double> logits, std::size_t label);

/// softmax(logits) - onehot(label).
std::vector<double> cross_entropy_grad(std::span<const double> logits, std::size_t label);

std::vector<double> softmax(std::span<const double> logits);

/// Index of the single 1 in a one-hot vector. Throws ValidationError unless
/// every entry is 0 or 1 and exactly one is 1.
std::size_t onehot_label(std::span<const double> onehot);

std::vector<double> make_onehot(std::size_t label, std::size_t classes);

/// Sum over class channels of nig_nll plus lambda * cross_entropy over the
/// gamma vector.
double modality_loss(std::span<const NIGParams> per_class, std::span<const double> onehot,
                     double lambda);

/// Sum over class channels of student_t_nll plus lambda * cross_entropy over
/// the fused locations.
double fused_loss(std::span<const StudentT> per_class, std::span<const double> onehot,
                  double lambda);

/// Sum of every modality_loss and the fused_loss.
LossBreakdown total_loss(const std::vector<std::vector<NIGParams>>& per_modality,
                         std::span<const StudentT> fused, std::span<const double> onehot,
                         double lambda);

/// Converts every channel to Student's t, fuses classwise and evaluates
/// total_loss. This is the training objective for one sample.
LossBreakdown evidential_objective(const std::vector<std::vector<NIGParams>>& per_modality,
                                   std::span<const double> onehot, double lambda);

/// Gradient of the NIG -> Student's t map, pulled back onto (gamma, delta, alpha, beta).
NIGGrad student_t_grad_to_nig(const NIGParams& p, const StudentTGrad& g);

struct LossGradients {
  LossBreakdown loss;
  /// Total derivative of the objective w.r.t. every NIG parameter, including
  /// the path through the Student's t conversion and the fusion.
  std::vector<std::vector<NIGGrad>> per_modality;
  /// Partial derivative w.r.t. the fused (u, sigma, v) of each class channel.
  std::vector<StudentTGrad> fused;
};

/// Analytic gradients of evidential_objective. The minimum-DOF selection in the
/// fusion is treated as locally constant.
LossGradients loss_gradients(const std::vector<std::vector<NIGParams>>& per_modality,
                             std::span<const double> onehot, double lambda);

}  // namespace evmost
