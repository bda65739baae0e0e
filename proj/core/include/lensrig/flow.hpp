#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lensrig/domain.hpp"

namespace lensrig {

struct IntegratorCfg {
  double rtol = 1e-9;
  double atol = 1e-11;
  double eventTol = 1e-10;
  double tangencyTol = 1e-7;  // radians
  double maxLength = 0.0;     // 0 = 100 * scene diameter estimate
  bool storeSamples = false;
  bool storeDense = false;  // keep dense-output blocks for stateAt()
  long maxSteps = 50'000'000;

  double maxLengthFor(const Scene& scene) const {
    return maxLength > 0 ? maxLength : 100.0 * scene.diameterEstimate();
  }
};

enum class EventKind { Entry, Exit, Graze, SwitchTangent, GluingJump, Seam };

const char* eventKindName(EventKind k);

struct GeoEvent {
  EventKind kind;
  double t = 0.0;      // arclength along the geodesic
  int boundary = -1;   // boundary index; -1 for Seam
  double s = 0.0;      // boundary arclength (Seam: the kink radius)
  double angle = 0.0;  // angle against the boundary tangent, in [0, pi]
};

struct GeoSample {
  double t = 0.0;
  ChartPoint p;
  double du = 0.0, dv = 0.0;
};

struct BoundaryHit {
  int boundary = -1;
  double s = 0.0;
  double theta = 0.0;  // measured from the oriented tangent, in [0, pi]
};

// Dense-output block of one accepted integrator step (quartic interpolant).
struct DenseBlock {
  double t0 = 0.0, h = 0.0;
  std::array<std::array<double, 6>, 5> rcont{};
};

struct GeodesicRecord {
  double length = 0.0;
  bool trapped = false;
  std::optional<BoundaryHit> exit;
  std::vector<GeoEvent> events;
  std::vector<GeoSample> samples;   // if cfg.storeSamples
  std::vector<DenseBlock> dense;    // if cfg.storeDense
  std::optional<double> clairaut;   // f^2 * theta_dot at start (revolution)
  double maxSpeedDrift = 0.0;       // relative drift of |gamma'|
  double maxClairautDrift = 0.0;    // relative, reset at gluing jumps
  int gluingJumps = 0;
  int grazeCount = 0;
  int switchTangentCount = 0;
  int seamCrossings = 0;

  bool startedOnBoundary = false;
  BoundaryHit entry;       // valid when startedOnBoundary
  TangentVec startTangent; // always valid
  std::array<double, 4> endState{};  // (u, v, du, dv) where the trace stopped

  // Interpolated state (needs cfg.storeDense). Returns (u, v, du, dv, j, j').
  std::array<double, 6> stateAt(double t) const;
};

struct BoundaryStart {
  int boundary = 0;
  double s = 0.0;
  double theta = 0.0;  // in (0, pi)
};

// Traces the geodesic until it reaches a true boundary, exceeds the length
// cap (trapped), or fails. Tangential incidence on concave/geodesic boundary
// is logged and integration continues; on strictly convex boundary it stops.
// The scene must carry a precomputed classification (see scenes::loadScene).
GeodesicRecord trace(const Scene& scene, const BoundaryStart& start,
                     const IntegratorCfg& cfg);
GeodesicRecord trace(const Scene& scene, const TangentVec& start,
                     const IntegratorCfg& cfg);

struct GridSpec {
  std::vector<int> boundaries;  // empty = all non-glued boundaries
  int nS = 64;
  int nTheta = 64;
  double thetaMargin = 0.05;
};

struct ScatteringSample {
  int bIn = 0;
  double s = 0.0, theta = 0.0;
  bool ok = false;
  bool trapped = false;
  int bOut = -1;
  double sOut = 0.0, thetaOut = 0.0, tau = 0.0;
  int gluingJumps = 0, grazeCount = 0, switchTangentCount = 0,
      seamCrossings = 0;
  double maxSpeedDrift = 0.0, maxClairautDrift = 0.0;
  std::string error;
  std::string eventSummary;
};

struct ScatteringTable {
  GridSpec grid;
  std::vector<int> gridBoundaries;        // resolved boundary list
  std::vector<ScatteringSample> samples;  // (b, iS, iTheta) lexicographic

  const ScatteringSample& at(int bPos, int iS, int iTheta) const {
    return samples[(bPos * grid.nS + iS) * grid.nTheta + iTheta];
  }
};

std::vector<double> gridThetaValues(const GridSpec& grid);

// Compact "kind@t|kind@t" string of the non-terminal events of a record.
std::string summarizeEvents(const std::vector<GeoEvent>& evs);

ScatteringTable scatteringMap(const Scene& scene, const GridSpec& grid,
                              const IntegratorCfg& cfg, int threads = 0);

struct JacobiRecord {
  std::vector<std::array<double, 3>> jSamples;  // (t, j, j')
  std::optional<double> firstConjugateT;
  double length = 0.0;
  bool trapped = false;
};

// Re-traces geo's geodesic integrating j'' + K(gamma(t)) j = 0, j(0) = 0,
// j'(0) = 1 alongside; locates the first positive zero of j if any.
JacobiRecord jacobiAlong(const Scene& scene, const GeodesicRecord& geo,
                         const IntegratorCfg& cfg);

struct ConjugateViolation {
  int boundary = 0;
  double s = 0.0, theta = 0.0;
  double conjugateT = 0.0, tau = 0.0;
};

struct ConjugateReport {
  std::vector<ConjugateViolation> violations;
  double maxCheckedLength = 0.0;
  int checked = 0;
  int skipped = 0;  // trapped or failed samples
};

ConjugateReport certifyNoConjugatePoints(const Scene& scene,
                                         const GridSpec& grid,
                                         const IntegratorCfg& cfg,
                                         int threads = 0);

struct SelfIntersection {
  double t1 = 0.0, t2 = 0.0;
  ChartPoint where;
};

// Scans a sampled record for a transversal self-crossing. For revolution
// charts the sweep accounts for theta-periodicity (unwrapped theta shifted by
// whole turns), which is how loops around the axis are caught.
std::optional<SelfIntersection> findSelfIntersection(const Scene& scene,
                                                     const GeodesicRecord& rec);

// Entry point for tracing the time-reversed geodesic of a recorded exit.
inline BoundaryStart reversedStart(const BoundaryHit& exitHit) {
  return {exitHit.boundary, exitHit.s, M_PI - exitHit.theta};
}

}  // namespace lensrig
