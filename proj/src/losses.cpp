#include "evmost/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "evmost/errors.hpp"
#include "evmost/special.hpp"

namespace evmost {

namespace {

void check_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    std::ostringstream os;
    os << "lambda must lie in [0, 1], got " << lambda;
    throw ValidationError(os.str());
  }
}

double log_sum_exp(std::span<const double> x) {
  const double m = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace

double nig_nll(const NIGParams& p, double y) {
  const double a = p.alpha();
  const double d = p.delta();
  const double omega = 2.0 * p.beta() * (1.0 + d);
  const double r = y - p.gamma();
  return log_gamma(a) + 0.5 * std::log(std::numbers::pi / d) - log_gamma(a + 0.5) -
         a * std::log(omega) + (a + 0.5) * std::log(r * r * d + omega);
}

NIGGrad nig_nll_grad(const NIGParams& p, double y) {
  const double a = p.alpha();
  const double d = p.delta();
  const double b = p.beta();
  const double omega = 2.0 * b * (1.0 + d);
  const double r = y - p.gamma();
  const double s = r * r * d + omega;
  NIGGrad g;
  g.gamma = -(a + 0.5) * 2.0 * r * d / s;
  g.delta = -0.5 / d - a * 2.0 * b / omega + (a + 0.5) * (r * r + 2.0 * b) / s;
  g.alpha = digamma(a) - digamma(a + 0.5) - std::log(omega) + std::log(s);
  g.beta = -a / b + (a + 0.5) * 2.0 * (1.0 + d) / s;
  return g;
}

double student_t_nll(const StudentT& st, double y) {
  const double v = st.v();
  const double r = y - st.u();
  return 0.5 * std::log(st.sigma()) + log_gamma(0.5 * v) - log_gamma(0.5 * (v + 1.0)) +
         0.5 * std::log(v * std::numbers::pi) +
         0.5 * (v + 1.0) * std::log1p(r * r / (v * st.sigma()));
}

StudentTGrad student_t_nll_grad(const StudentT& st, double y) {
  const double v = st.v();
  const double sig = st.sigma();
  const double r = y - st.u();
  const double q = 1.0 + r * r / (v * sig);
  StudentTGrad g;
  g.u = -(v + 1.0) * r / (v * sig * q);
  g.sigma = 0.5 / sig - 0.5 * (v + 1.0) * r * r / (v * sig * sig * q);
  g.v = 0.5 * digamma(0.5 * v) - 0.5 * digamma(0.5 * (v + 1.0)) + 0.5 / v + 0.5 * std::log(q) -
        0.5 * (v + 1.0) * r * r / (v * v * sig * q);
  return g;
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw ValidationError("softmax: empty logits");
  const double lse = log_sum_exp(logits);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = std::exp(logits[i] - lse);
  return out;
}

double cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    std::ostringstream os;
    os << "cross_entropy: label " << label << " out of range for " << logits.size()
       << " classes";
    throw ValidationError(os.str());
  }
  return log_sum_exp(logits) - logits[label];
}

std::vector<double> cross_entropy_grad(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw ValidationError("cross_entropy_grad: label out of range");
  std::vector<double> g = softmax(logits);
  g[label] -= 1.0;
  return g;
}

std::size_t onehot_label(std::span<const double> onehot) {
  std::size_t label = onehot.size();
  for (std::size_t k = 0; k < onehot.size(); ++k) {
    if (onehot[k] == 1.0) {
      if (label != onehot.size()) throw ValidationError("one-hot vector has more than one 1");
      label = k;
    } else if (onehot[k] != 0.0) {
      throw ValidationError("one-hot vector entries must be 0 or 1");
    }
  }
  if (label == onehot.size()) throw ValidationError("one-hot vector has no 1");
  return label;
}

std::vector<double> make_onehot(std::size_t label, std::size_t classes) {
  if (label >= classes) throw ValidationError("make_onehot: label out of range");
  std::vector<double> v(classes, 0.0);
  v[label] = 1.0;
  return v;
}

double modality_loss(std::span<const NIGParams> per_class, std::span<const double> onehot,
                     double lambda) {
  if (per_class.size() != onehot.size()) {
    throw ValidationError("modality_loss: channel count does not match one-hot length");
  }
  const std::size_t label = onehot_label(onehot);
  double nll = 0.0;
  std::vector<double> locations(per_class.size());
  for (std::size_t k = 0; k < per_class.size(); ++k) {
    nll += nig_nll(per_class[k], onehot[k]);
    locations[k] = per_class[k].gamma();
  }
  return nll + lambda * cross_entropy(locations, label);
}

double fused_loss(std::span<const StudentT> per_class, std::span<const double> onehot,
                  double lambda) {
  if (per_class.size() != onehot.size()) {
    throw ValidationError("fused_loss: channel count does not match one-hot length");
  }
  const std::size_t label = onehot_label(onehot);
  double nll = 0.0;
  std::vector<double> locations(per_class.size());
  for (std::size_t k = 0; k < per_class.size(); ++k) {
    nll += student_t_nll(per_class[k], onehot[k]);
    locations[k] = per_class[k].u();
  }
  return nll + lambda * cross_entropy(locations, label);
}

LossBreakdown total_loss(const std::vector<std::vector<NIGParams>>& per_modality,
                         std::span<const StudentT> fused, std::span<const double> onehot,
                         double lambda) {
  check_lambda(lambda);
  if (per_modality.empty()) throw ValidationError("total_loss: no modalities");
  for (const auto& m : per_modality) {
    if (m.size() != fused.size()) {
      throw ValidationError("total_loss: inconsistent class count across modalities");
    }
  }
  LossBreakdown out;
  out.lambda = lambda;
  out.per_modality_nig.reserve(per_modality.size());
  double sum = 0.0;
  for (const auto& m : per_modality) {
    out.per_modality_nig.push_back(modality_loss(m, onehot, lambda));
    sum += out.per_modality_nig.back();
  }
  out.fused_st = fused_loss(fused, onehot, lambda);
  out.total = sum + out.fused_st;
  if (!std::isfinite(out.total)) throw NumericalError("total_loss: non-finite loss");
  return out;
}

namespace {

std::vector<std::vector<StudentT>> convert_all(
    const std::vector<std::vector<NIGParams>>& per_modality) {
  std::vector<std::vector<StudentT>> out;
  out.reserve(per_modality.size());
  for (const auto& m : per_modality) {
    std::vector<StudentT> sts;
    sts.reserve(m.size());
    for (const auto& p : m) sts.push_back(nig_to_student_t(p));
    out.push_back(std::move(sts));
  }
  return out;
}

std::vector<StudentT> fused_channels(const std::vector<std::vector<StudentT>>& converted) {
  std::vector<StudentT> out;
  for (const auto& f : fuse_classwise(converted)) out.push_back(f.st);
  return out;
}

}  // namespace

LossBreakdown evidential_objective(const std::vector<std::vector<NIGParams>>& per_modality,
                                   std::span<const double> onehot, double lambda) {
  if (per_modality.empty()) throw ValidationError("evidential_objective: no modalities");
  const auto fused = fused_channels(convert_all(per_modality));
  return total_loss(per_modality, fused, onehot, lambda);
}

NIGGrad student_t_grad_to_nig(const NIGParams& p, const StudentTGrad& g) {
  // u = gamma, sigma = beta (1 + delta) / (delta alpha), v = 2 alpha
  const double a = p.alpha();
  const double d = p.delta();
  const double b = p.beta();
  const double sigma = b * (1.0 + d) / (d * a);
  NIGGrad out;
  out.gamma = g.u;
  out.delta = g.sigma * (-b / (a * d * d));
  out.alpha = g.sigma * (-sigma / a) + 2.0 * g.v;
  out.beta = g.sigma * (1.0 + d) / (d * a);
  return out;
}

LossGradients loss_gradients(const std::vector<std::vector<NIGParams>>& per_modality,
                             std::span<const double> onehot, double lambda) {
  if (per_modality.empty()) throw ValidationError("loss_gradients: no modalities");
  const auto converted = convert_all(per_modality);
  const auto fused = fused_channels(converted);
  LossGradients out;
  out.loss = total_loss(per_modality, fused, onehot, lambda);

  const std::size_t classes = fused.size();
  const std::size_t modalities = per_modality.size();
  const std::size_t label = onehot_label(onehot);

  out.per_modality.assign(modalities, std::vector<NIGGrad>(classes));
  for (std::size_t m = 0; m < modalities; ++m) {
    std::vector<double> locations(classes);
    for (std::size_t k = 0; k < classes; ++k) {
      out.per_modality[m][k] = nig_nll_grad(per_modality[m][k], onehot[k]);
      locations[k] = per_modality[m][k].gamma();
    }
    const auto ce = cross_entropy_grad(locations, label);
    for (std::size_t k = 0; k < classes; ++k) out.per_modality[m][k].gamma += lambda * ce[k];
  }

  out.fused.resize(classes);
  std::vector<double> fused_locations(classes);
  for (std::size_t k = 0; k < classes; ++k) {
    out.fused[k] = student_t_nll_grad(fused[k], onehot[k]);
    fused_locations[k] = fused[k].u();
  }
  const auto ce = cross_entropy_grad(fused_locations, label);
  for (std::size_t k = 0; k < classes; ++k) out.fused[k].u += lambda * ce[k];

  std::vector<StudentT> channel;
  for (std::size_t k = 0; k < classes; ++k) {
    channel.clear();
    for (std::size_t m = 0; m < modalities; ++m) channel.push_back(converted[m][k]);
    const auto back = fuse_many_backward(channel, out.fused[k]);
    for (std::size_t m = 0; m < modalities; ++m) {
      const NIGGrad g = student_t_grad_to_nig(per_modality[m][k], back[m]);
      NIGGrad& dst = out.per_modality[m][k];
      dst.gamma += g.gamma;
      dst.delta += g.delta;
      dst.alpha += g.alpha;
      dst.beta += g.beta;
    }
  }
  return out;
}

}  // namespace evmost
