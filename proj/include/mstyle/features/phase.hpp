#pragma once

#include "mstyle/motion/skeleton.hpp"

#include <vector>

namespace mstyle::features {

/// Phase in [0,1): 0 at left heel strikes, 0.5 at right heel strikes, linear in between.
///
/// A strike is a heel-contact onset on a walk frame. Inside a walk segment the
/// phase is extrapolated before the first and after the last strike at the
/// neighbouring interval's rate. Stand frames hold the previous value; leading
/// stand frames take the first walk value. Throws LabelingError when a walk
/// segment has no strike.
std::vector<double> compute_phase(const std::vector<motion::ContactLabels>& contacts,
                                  const std::vector<motion::Gait>& actions);

/// Phase difference b - a wrapped into [-0.5, 0.5).
double phase_delta(double a, double b);
double wrap_phase(double p);

}  // namespace mstyle::features
