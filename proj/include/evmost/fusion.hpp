#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "evmost/distributions.hpp"

namespace evmost {

/// Result of a mixture-of-Student's-t fusion. `source_index` is the input
/// whose location and degrees of freedom were adopted; its v is minimal.
struct FusedStudentT {
  StudentT st;
  std::size_t source_index;
};

/// Fuses two Student's t distributions. The heavier-tailed input (smaller v)
/// supplies u and v; the other input's scale is rescaled to the same degrees
/// of freedom and averaged in:
///
///   sigma_F = (sigma_1 + v_2 (v_1 - 2) / (v_1 (v_2 - 2)) sigma_2) / 2
///
/// Equal v: the input with the smaller sigma is the source, then the lower
/// index. source_index is 0 for `a`, 1 for `b`.
FusedStudentT fuse_pair(const StudentT& a, const StudentT& b);

/// Left fold of fuse_pair in index order. A single input is returned as is.
/// More than two inputs extends the two-modality rule; source_index refers to
/// the position in `inputs`. Throws ValidationError on an empty list.
FusedStudentT fuse_many(std::span<const StudentT> inputs);

struct FusedPrediction {
  double y_hat;
  double uncertainty;
};

/// y_hat = u_F and uncertainty = sigma_F v_F / (v_F - 2).
FusedPrediction fused_prediction(const FusedStudentT& f);

/// Applies fuse_many independently to each class channel. per_modality[m][k]
/// is channel k of modality m. Cross-channel and cross-modality covariances
/// are taken as zero. Throws ValidationError on empty input or ragged channels.
std::vector<FusedStudentT> fuse_classwise(const std::vector<std::vector<StudentT>>& per_modality);

/// Gradient with respect to the (u, sigma, v) of a Student's t.
struct StudentTGrad {
  double u = 0.0;
  double sigma = 0.0;
  double v = 0.0;
};

struct PairGrad {
  StudentTGrad a;
  StudentTGrad b;
};

/// Pulls a gradient on the fused (u, sigma, v) back onto the two inputs of
/// fuse_pair. The source selection is held fixed (it is piecewise constant).
PairGrad fuse_pair_backward(const StudentT& a, const StudentT& b, const StudentTGrad& upstream);

/// Backward pass of fuse_many: one gradient per input.
std::vector<StudentTGrad> fuse_many_backward(std::span<const StudentT> inputs,
                                             const StudentTGrad& upstream);

}  // namespace evmost
