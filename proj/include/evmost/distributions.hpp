#pragma once

#include <cstddef>

namespace evmost {

/// Normal-Inverse-Gamma evidential parameters for one scalar target:
/// mu ~ N(gamma, sigma^2 / delta), sigma^2 ~ InvGamma(alpha, beta).
///
/// Construction validates delta > 0, alpha > 1, beta > 0 and a finite gamma,
/// throwing ValidationError otherwise; every live instance is valid.
class NIGParams {
 public:
  NIGParams(double gamma, double delta, double alpha, double beta);

  double gamma() const { return gamma_; }
  double delta() const { return delta_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }

  friend bool operator==(const NIGParams&, const NIGParams&) = default;

 private:
  double gamma_;
  double delta_;
  double alpha_;
  double beta_;
};

/// Univariate Student's t with location u, squared scale sigma and degrees of
/// freedom v. Density is proportional to (1 + (y - u)^2 / (v sigma))^(-(v+1)/2),
/// so sigma plays the role of a variance parameter. Requires sigma > 0, v > 2.
class StudentT {
 public:
  StudentT(double u, double sigma, double v);

  double u() const { return u_; }
  double sigma() const { return sigma_; }
  double v() const { return v_; }

  friend bool operator==(const StudentT&, const StudentT&) = default;

 private:
  double u_;
  double sigma_;
  double v_;
};

/// Aleatoric uncertainty E[sigma^2] = beta / (alpha - 1).
double nig_aleatoric(const NIGParams& p);

/// Epistemic uncertainty Var[mu] = beta / (delta (alpha - 1)).
double nig_epistemic(const NIGParams& p);

/// Posterior predictive of the NIG prior under a Gaussian likelihood:
/// St(gamma, beta (1 + delta) / (delta alpha), 2 alpha).
StudentT nig_to_student_t(const NIGParams& p);

double student_t_pdf(const StudentT& st, double y);

/// Log-density via log-gamma; finite for any finite y.
double student_t_logpdf(const StudentT& st, double y);

/// sigma v / (v - 2).
double student_t_variance(const StudentT& st);

/// Grid for the brute-force marginal-likelihood oracle.
///
/// mu is integrated over gamma +/- mu_half_width * sqrt(EP) and sigma^2 over
/// the log-spaced range [beta / (alpha * 10^decades), beta * 10^decades / alpha],
/// both with composite Simpson. Each refinement doubles the interval count;
/// the result is accepted once two successive grids agree within tolerance.
struct QuadratureSpec {
  double mu_half_width = 40.0;
  std::size_t mu_nodes = 2001;
  double sigma2_decades = 4.0;
  std::size_t sigma2_nodes = 2001;
  double tolerance = 1e-6;
  int max_refinements = 3;
};

/// Numerically evaluates the double integral over (mu, sigma^2) of
/// N(y | mu, sigma^2) NIG(mu, sigma^2 | p). Throws NumericalError when no two
/// successive refinements agree within spec.tolerance.
double nig_marginal_pdf_quadrature(const NIGParams& p, double y,
                                   const QuadratureSpec& spec = {});

}  // namespace evmost
