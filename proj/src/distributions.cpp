#include "evmost/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "evmost/errors.hpp"
#include "evmost/special.hpp"

namespace evmost {

NIGParams::NIGParams(double gamma, double delta, double alpha, double beta)
    : gamma_(gamma), delta_(delta), alpha_(alpha), beta_(beta) {
  // Negated comparisons so NaN is rejected too.
  if (!std::isfinite(gamma) || !(delta > 0.0) || !(alpha > 1.0) || !(beta > 0.0) ||
      !std::isfinite(delta) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    std::ostringstream os;
    os << "invalid NIG parameters (gamma=" << gamma << ", delta=" << delta
       << ", alpha=" << alpha << ", beta=" << beta
       << "): require finite gamma, delta > 0, alpha > 1, beta > 0";
    throw ValidationError(os.str());
  }
}

StudentT::StudentT(double u, double sigma, double v) : u_(u), sigma_(sigma), v_(v) {
  if (!std::isfinite(u) || !(sigma > 0.0) || !(v > 2.0) || !std::isfinite(sigma) ||
      !std::isfinite(v)) {
    std::ostringstream os;
    os << "invalid Student's t parameters (u=" << u << ", sigma=" << sigma << ", v=" << v
       << "): require finite u, sigma > 0, v > 2";
    throw ValidationError(os.str());
  }
}

double nig_aleatoric(const NIGParams& p) { return p.beta() / (p.alpha() - 1.0); }

double nig_epistemic(const NIGParams& p) {
  return p.beta() / (p.delta() * (p.alpha() - 1.0));
}

StudentT nig_to_student_t(const NIGParams& p) {
  const double sigma = p.beta() * (1.0 + p.delta()) / (p.delta() * p.alpha());
  return StudentT(p.gamma(), sigma, 2.0 * p.alpha());
}

double student_t_logpdf(const StudentT& st, double y) {
  const double v = st.v();
  const double r = y - st.u();
  return log_gamma(0.5 * (v + 1.0)) - log_gamma(0.5 * v) -
         0.5 * std::log(v * std::numbers::pi * st.sigma()) -
         0.5 * (v + 1.0) * std::log1p(r * r / (v * st.sigma()));
}

double student_t_pdf(const StudentT& st, double y) {
  const double v = st.v();
  const double r = y - st.u();
  const double norm = std::exp(log_gamma(0.5 * (v + 1.0)) - log_gamma(0.5 * v)) /
                      std::sqrt(v * std::numbers::pi * st.sigma());
  return norm * std::pow(1.0 + r * r / (v * st.sigma()), -0.5 * (v + 1.0));
}

double student_t_variance(const StudentT& st) { return st.sigma() * st.v() / (st.v() - 2.0); }

namespace {

// Composite Simpson weight (without the h/3 factor) for node i of n (n odd).
double simpson_weight(std::size_t i, std::size_t n) {
  if (i == 0 || i + 1 == n) return 1.0;
  return (i % 2 == 1) ? 4.0 : 2.0;
}

std::size_t refine(std::size_t n) { return 2 * (n - 1) + 1; }

constexpr std::size_t kAnchor = 32;
constexpr double kNegligible = 1e-18;

struct Estimate {
  double coarse;
  double fine;
};

// Evaluates the integral on the fine grid (fine_mu x fine_s nodes) and, from
// the even-indexed subset of the same nodes, on the grid one level coarser.
Estimate integrate_level(const NIGParams& p, double y, const QuadratureSpec& spec,
                         std::size_t fine_mu, std::size_t fine_s) {
  const double half = spec.mu_half_width * std::sqrt(nig_epistemic(p));
  const double h_mu = 2.0 * half / static_cast<double>(fine_mu - 1);

  const double scale = std::pow(10.0, spec.sigma2_decades);
  const double t_lo = std::log(p.beta() / (p.alpha() * scale));
  const double t_hi = std::log(p.beta() * scale / p.alpha());
  const double h_t = (t_hi - t_lo) / static_cast<double>(fine_s - 1);

  // (y - mu)^2 + delta (mu - gamma)^2; the Gaussian likelihood and the
  // conditional prior on mu share the 1/(2 sigma^2) factor.
  std::vector<double> quad(fine_mu);
  for (std::size_t j = 0; j < fine_mu; ++j) {
    // Offsets measured from both ends so the grid is mirror-symmetric about gamma.
    const double offset = (2 * j < fine_mu - 1)
                              ? -half + static_cast<double>(j) * h_mu
                              : half - static_cast<double>(fine_mu - 1 - j) * h_mu;
    const double mu = p.gamma() + offset;
    const double a = y - mu;
    quad[j] = a * a + p.delta() * offset * offset;
  }

  const std::size_t peak_j = static_cast<std::size_t>(
      std::min_element(quad.begin(), quad.end()) - quad.begin());
  // Q(mu) = (y - mu)^2 + delta (mu - gamma)^2 has constant second difference.
  const double second_diff = 2.0 * (1.0 + p.delta()) * h_mu * h_mu;

  const std::size_t coarse_mu = (fine_mu + 1) / 2;
  const std::size_t coarse_s = (fine_s + 1) / 2;
  const double log_norm = 0.5 * std::log(p.delta()) - std::log(2.0 * std::numbers::pi) +
                          p.alpha() * std::log(p.beta()) - log_gamma(p.alpha());

  double outer_fine = 0.0;
  double outer_coarse = 0.0;
  for (std::size_t i = 0; i < fine_s; ++i) {
    const double t = t_lo + static_cast<double>(i) * h_t;
    const double s = std::exp(t);
    // sigma^2-dependent factors of N(y|mu,s) N(mu|gamma,s/delta) IG(s), times ds/dt = s
    const double log_w = log_norm - (p.alpha() + 1.0) * t - p.beta() / s;
    const double w = std::exp(log_w);
    if (w == 0.0) continue;

    const double kappa = 0.5 / s;
    double inner_fine = 0.0;
    double inner_coarse = 0.0;
    auto accumulate = [&](std::size_t j, double e) {
      inner_fine += simpson_weight(j, fine_mu) * e;
      if (j % 2 == 0) inner_coarse += simpson_weight(j / 2, coarse_mu) * e;
    };
    // The mu-integrand exp(-kappa Q_j) is unimodal with its peak at argmin Q.
    // Walk outwards from the peak with the multiplicative recurrence
    // e_{j+1} = e_j r_j, r_{j+1} = r_j rho (Q is quadratic in j), re-anchored
    // with an exact exp every kAnchor steps, and stop once the terms are
    // negligible against the peak.
    const double rho = std::exp(-kappa * second_diff);
    const double peak = std::exp(-kappa * quad[peak_j]);
    const double cutoff = kNegligible * peak;
    {
      double e = peak;
      double r = 1.0;
      for (std::size_t j = peak_j; j < fine_mu; ++j) {
        if ((j - peak_j) % kAnchor == 0) {
          e = std::exp(-kappa * quad[j]);
          if (j + 1 < fine_mu) r = std::exp(-kappa * (quad[j + 1] - quad[j]));
        }
        accumulate(j, e);
        if (e < cutoff) break;
        e *= r;
        r *= rho;
      }
    }
    {
      double e = peak;
      double r = 1.0;
      for (std::size_t j = peak_j; j-- > 0;) {
        if ((peak_j - 1 - j) % kAnchor == 0) {
          e = std::exp(-kappa * quad[j]);
          if (j > 0) r = std::exp(-kappa * (quad[j - 1] - quad[j]));
        }
        accumulate(j, e);
        if (e < cutoff) break;
        e *= r;
        r *= rho;
      }
    }
    inner_fine *= h_mu / 3.0;
    inner_coarse *= 2.0 * h_mu / 3.0;

    outer_fine += simpson_weight(i, fine_s) * w * inner_fine;
    if (i % 2 == 0) outer_coarse += simpson_weight(i / 2, coarse_s) * w * inner_coarse;
  }
  return {outer_coarse * 2.0 * h_t / 3.0, outer_fine * h_t / 3.0};
}

}  // namespace

double nig_marginal_pdf_quadrature(const NIGParams& p, double y, const QuadratureSpec& spec) {
  if (spec.mu_nodes < 3 || spec.sigma2_nodes < 3 || spec.mu_nodes % 2 == 0 ||
      spec.sigma2_nodes % 2 == 0) {
    throw ValidationError("quadrature node counts must be odd and >= 3");
  }
  if (!std::isfinite(y)) throw ValidationError("quadrature target y must be finite");

  std::size_t mu_nodes = refine(spec.mu_nodes);
  std::size_t s_nodes = refine(spec.sigma2_nodes);
  double last_diff = 0.0;
  for (int level = 0; level <= spec.max_refinements; ++level) {
    const Estimate est = integrate_level(p, y, spec, mu_nodes, s_nodes);
    last_diff = std::fabs(est.fine - est.coarse);
    if (last_diff <= spec.tolerance) return est.fine;
    mu_nodes = refine(mu_nodes);
    s_nodes = refine(s_nodes);
  }
  std::ostringstream os;
  os << "NIG marginal quadrature did not converge: successive refinements differ by "
     << last_diff << " (> " << spec.tolerance << ")";
  throw NumericalError(os.str());
}

}  // namespace evmost
