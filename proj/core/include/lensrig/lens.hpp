#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lensrig/flow.hpp"

namespace lensrig {

// Arclength correspondence s -> sigma*s + shift between matched boundary
// circles of two scenes (sigma = -1 reverses orientation).
struct BoundaryMapEntry {
  int from = 0;
  int to = 0;
  double sigma = 1.0;
  double shift = 0.0;
};

struct BoundaryIsometry {
  std::vector<BoundaryMapEntry> maps;

  const BoundaryMapEntry& entryFor(int bM) const;
  static BoundaryIsometry identity(const Scene& M);
};

// Checks matched boundary lengths agree to tol (throws ValidationError).
void validateIsometry(const Scene& M, const Scene& N,
                      const BoundaryIsometry& h, double tol = 1e-9);

struct PhiImage {
  int boundary = 0;
  double s = 0.0;
  double theta = 0.0;
};

// The induced bundle map on boundary-tangent coordinates: tangential
// components push forward through h, normal components map to normal
// components. theta may take the edge values 0 and pi.
PhiImage inducedPhi(const Scene& M, const Scene& N, const BoundaryIsometry& h,
                    int boundary, double s, double theta);

struct CompareCfg {
  GridSpec grid;
  IntegratorCfg integ;
  // Combined (s, theta) exit residual. Sized for the default integrator
  // tolerances over paths up to ~100 scene diameters; genuinely different
  // data produce residuals orders of magnitude above it.
  double scatTol = 1e-4;
  double lensTol = 0.0;   // 0 = 1e-4 * max scene diameter
  int threads = 0;
};

struct CompareSampleRow {
  int bIn = 0;
  double s = 0.0, theta = 0.0;
  bool usable = false;
  std::string excludeReason;
  bool scatMatch = false;
  double dS = 0.0, dTheta = 0.0;
  double e = 0.0;  // tau_N(phi X) - tau_M(X)
  int family = -1;
  int glueM = 0, seamM = 0, glueN = 0, seamN = 0;
  int tangM = 0, tangN = 0;  // graze + switch-tangent counts
};

struct FamilyStat {
  int id = 0;
  int size = 0;
  double eMean = 0.0, eSpread = 0.0, eMin = 0.0, eMax = 0.0;
  bool touchesCapOrGlue = false;  // any gluing jump or seam crossing
};

struct LensComparison {
  bool sameScattering = false;
  bool sameLens = false;
  double maxResidualS = 0.0, maxResidualTheta = 0.0;
  double scatTol = 0.0, lensTol = 0.0;
  int usableCount = 0, excludedCount = 0;
  std::vector<CompareSampleRow> samples;  // grid order of M's table
  std::vector<FamilyStat> families;
};

LensComparison compareScenes(const Scene& M, const Scene& N,
                             const BoundaryIsometry& h, const CompareCfg& cfg);

// Difference of the (constant) excess between two families; throws
// ConvergenceError carrying the spread when either family is not constant
// within constancyTol.
double pairExcess(const LensComparison& cmp, int fam1, int fam2,
                  double constancyTol);

struct FirstVariationReport {
  struct Branch {
    int first = 0, last = 0;  // sample index range
    double maxResidual = 0.0;
  };
  std::vector<Branch> branches;
  double maxResidual = 0.0;
};

// Checks d(tau) = cos(theta_out) d(s_out) - cos(theta_in) d(s_in) along a
// one-parameter family of geodesics (vary s at fixed theta, or vary theta at
// fixed s); families are split at tangency/trapped samples.
FirstVariationReport firstVariationCheck(const Scene& scene, int boundary,
                                         bool varyS, double fixedValue, int n,
                                         const IntegratorCfg& cfg);

struct TangentLimit {
  double value = 0.0;
  double tailSpread = 0.0;
  bool concaveDirection = false;  // value forced to 0 by definition
};

// Limit of the excess e along a sequence of directions closing on the
// oriented boundary tangent at (boundary, s); side +1 follows +T, -1 follows
// -T. Concave directions return 0 immediately.
TangentLimit tangentLimitExcess(const Scene& M, const Scene& N,
                                const BoundaryIsometry& h, int boundary,
                                double s, int side,
                                const std::vector<double>& thetaSeq,
                                const IntegratorCfg& cfg);

}  // namespace lensrig
