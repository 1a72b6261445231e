#include "evmost/fusion.hpp"

#include <sstream>

#include "evmost/errors.hpp"

namespace evmost {

namespace {

// True when `a` is the source of fuse_pair(a, b).
bool a_is_source(const StudentT& a, const StudentT& b) {
  if (a.v() != b.v()) return a.v() < b.v();
  return a.sigma() <= b.sigma();
}

// Rescaling factor that maps the lighter-tailed scale onto the source's DOF.
double dof_ratio(double v_src, double v_other) {
  return v_other * (v_src - 2.0) / (v_src * (v_other - 2.0));
}

}  // namespace

FusedStudentT fuse_pair(const StudentT& a, const StudentT& b) {
  const bool a_src = a_is_source(a, b);
  const StudentT& src = a_src ? a : b;
  const StudentT& other = a_src ? b : a;
  const double sigma = 0.5 * (src.sigma() + dof_ratio(src.v(), other.v()) * other.sigma());
  return {StudentT(src.u(), sigma, src.v()), a_src ? std::size_t{0} : std::size_t{1}};
}

FusedStudentT fuse_many(std::span<const StudentT> inputs) {
  if (inputs.empty()) throw ValidationError("fuse_many: empty input list");
  FusedStudentT acc{inputs[0], 0};
  for (std::size_t i = 1; i < inputs.size(); ++i) {
    const FusedStudentT step = fuse_pair(acc.st, inputs[i]);
    acc = {step.st, step.source_index == 0 ? acc.source_index : i};
  }
  return acc;
}

FusedPrediction fused_prediction(const FusedStudentT& f) {
  return {f.st.u(), student_t_variance(f.st)};
}

std::vector<FusedStudentT> fuse_classwise(const std::vector<std::vector<StudentT>>& per_modality) {
  if (per_modality.empty()) throw ValidationError("fuse_classwise: no modalities");
  const std::size_t classes = per_modality.front().size();
  if (classes == 0) throw ValidationError("fuse_classwise: no class channels");
  for (std::size_t m = 0; m < per_modality.size(); ++m) {
    if (per_modality[m].size() != classes) {
      std::ostringstream os;
      os << "fuse_classwise: modality " << m << " has " << per_modality[m].size()
         << " channels, expected " << classes;
      throw ValidationError(os.str());
    }
  }
  std::vector<FusedStudentT> out;
  out.reserve(classes);
  std::vector<StudentT> channel;
  channel.reserve(per_modality.size());
  for (std::size_t k = 0; k < classes; ++k) {
    channel.clear();
    for (const auto& modality : per_modality) channel.push_back(modality[k]);
    out.push_back(fuse_many(channel));
  }
  return out;
}

PairGrad fuse_pair_backward(const StudentT& a, const StudentT& b, const StudentTGrad& upstream) {
  const bool a_src = a_is_source(a, b);
  const StudentT& src = a_src ? a : b;
  const StudentT& other = a_src ? b : a;
  const double v1 = src.v();
  const double v2 = other.v();

  StudentTGrad g_src;
  StudentTGrad g_other;
  // u_F = u_1, v_F = v_1
  g_src.u = upstream.u;
  g_src.v = upstream.v;
  // sigma_F = (sigma_1 + c sigma_2) / 2,  c = v2 (v1 - 2) / (v1 (v2 - 2))
  const double c = dof_ratio(v1, v2);
  g_src.sigma = 0.5 * upstream.sigma;
  g_other.sigma = 0.5 * c * upstream.sigma;
  const double dc_dv1 = 2.0 * v2 / ((v2 - 2.0) * v1 * v1);
  const double dc_dv2 = -2.0 * (v1 - 2.0) / (v1 * (v2 - 2.0) * (v2 - 2.0));
  g_src.v += 0.5 * other.sigma() * dc_dv1 * upstream.sigma;
  g_other.v = 0.5 * other.sigma() * dc_dv2 * upstream.sigma;

  return a_src ? PairGrad{g_src, g_other} : PairGrad{g_other, g_src};
}

std::vector<StudentTGrad> fuse_many_backward(std::span<const StudentT> inputs,
                                             const StudentTGrad& upstream) {
  if (inputs.empty()) throw ValidationError("fuse_many_backward: empty input list");
  // Forward pass keeping every intermediate accumulator.
  std::vector<StudentT> acc;
  acc.reserve(inputs.size());
  acc.push_back(inputs[0]);
  for (std::size_t i = 1; i < inputs.size(); ++i) {
    acc.push_back(fuse_pair(acc.back(), inputs[i]).st);
  }
  std::vector<StudentTGrad> grads(inputs.size());
  StudentTGrad carry = upstream;
  for (std::size_t i = inputs.size() - 1; i >= 1; --i) {
    const PairGrad g = fuse_pair_backward(acc[i - 1], inputs[i], carry);
    grads[i] = g.b;
    carry = g.a;
  }
  grads[0] = carry;
  return grads;
}

}  // namespace evmost
