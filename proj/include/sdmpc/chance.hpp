#pragma once

namespace sdmpc {

enum class SigmaMode { kGaussian, kDistributionFree };

/// Standard normal quantile Φ⁻¹(p), 0 < p < 1, to full double precision.
double normal_quantile(double p);

/// Tightening factor of mean ± σ·sd box chance constraints: the standard
/// normal quantile of 1 - ε/2, or sqrt((2 - ε)/ε) without distributional
/// knowledge.
double chance_sigma(SigmaMode mode, double epsilon);

}  // namespace sdmpc
