#pragma once

#include <functional>
#include <string>
#include <vector>

#include "xlbeam/complex_matrix.hpp"
#include "xlbeam/network.hpp"

namespace xlbeam {

/// Central finite differences over every real component of every parameter.
/// `eval_loss` must rebuild the computation from the raw values. The error is
/// relative with the denominator floored at 1e-3 of the largest gradient
/// component, so FD roundoff on near-zero entries does not register while a
/// wrong adjoint (error at the gradient scale) still does.
double fd_max_rel_error(
    std::vector<ComplexMatrix>& params,
    const std::function<double(const std::vector<ComplexMatrix>&)>& eval_loss,
    const std::vector<ComplexMatrix>& grads, double step = 1e-6);

struct GradCheckReport {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// One dedicated single-primitive graph per autodiff primitive, each checked
/// against central differences at relative tolerance 1e-6.
std::vector<GradCheckReport> run_primitive_gradchecks();

/// Finite-difference check of the full training loss through the entire
/// network (sensing, MLP blocks with batch norm, merged CM head,
/// concentrated-MSE objective). Toy dimensions M=8, K=2, N=2, hidden (16, 8),
/// batch of 3 channels; tolerance 1e-5 at step 1e-6.
GradCheckReport run_network_gradcheck(std::uint64_t seed);

}  // namespace xlbeam
