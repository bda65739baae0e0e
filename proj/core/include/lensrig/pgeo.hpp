#pragma once

#include <vector>

#include "lensrig/flow.hpp"

namespace lensrig {

struct PGeoCfg {
  IntegratorCfg integ;
  double shootTol = 1e-11;  // chart distance to the target point
  double joinTol = 1e-6;    // radians, C1 defect at joints
  double etol = 1e-10;      // relative energy decrease per sweep
  int maxSweeps = 400;
  int shootMaxIter = 60;
  // Uniqueness-radius bound steering the shorten partition (t_{i+1} - t_i <
  // b^2 / E). 0 picks a conservative scene-dependent default.
  double b = 0.0;
};

struct PathSegment {
  enum Kind { Interior, BoundaryArc };
  Kind kind = Interior;
  TangentVec start;  // unit tangent at the segment start
  TangentVec end;    // unit tangent at the segment end
  double length = 0.0;
  // BoundaryArc only:
  int boundary = -1;
  double s0 = 0.0;
  double span = 0.0;  // signed arclength traversed (end at s0 + span)
  std::vector<ChartPoint> pts;  // coarse chart polyline of the segment
};

struct PGeodesicPath {
  std::vector<PathSegment> segments;
  double length = 0.0;
  double energy = 0.0;  // proportional parameterization on [0,1]: L^2
  std::vector<double> angleDefects;
  bool converged = true;
  std::vector<double> windingAngles;  // accumulated angle per scene hole

  ChartPoint startPoint() const { return segments.front().start.base; }
  ChartPoint endPoint() const { return segments.back().end.base; }
  std::vector<ChartPoint> polyline() const;
};

// Minimizing p-geodesic between nearby points: a single interior geodesic or
// a tangent / boundary-arc / tangent composite around concave boundary.
PGeodesicPath localPGeodesic(const Scene& scene, ChartPoint p, ChartPoint q,
                             const PGeoCfg& cfg = {});

// Every locally minimizing candidate multi-start finds (direct route plus
// each boundary-hugging route), sorted by length. Used by uniquenessRadius.
std::vector<PGeodesicPath> localPGeodesicCandidates(const Scene& scene,
                                                    ChartPoint p, ChartPoint q,
                                                    const PGeoCfg& cfg = {});

// Sampled lower bound for the uniqueness radius of the metric ball
// (center, radius): the largest probed b such that multi-start agrees on a
// single minimizer for every probe pair at distance <= b.
double uniquenessRadius(const Scene& scene, ChartPoint center, double radius,
                        const PGeoCfg& cfg = {}, int probePairs = 24,
                        unsigned seed = 20240801);

struct PiecewiseKnots {
  std::vector<double> t;        // 0 = t_0 < ... < t_k = 1
  std::vector<ChartPoint> x;    // k+1 knots
};

// sum_i d(x_i, x_{i+1})^2 / (t_{i+1} - t_i) with d the local p-geodesic
// distance. Throws when a knot pair exceeds cfg.b (if set).
double piecewiseEnergy(const Scene& scene, const PiecewiseKnots& knots,
                       const PGeoCfg& cfg = {});

struct ShortenResult {
  PGeodesicPath path;
  PiecewiseKnots knots;
  std::vector<double> energyHistory;  // piecewise energy after each sweep
  bool converged = false;
  int sweeps = 0;
  bool windingPreserved = true;
};

// Birkhoff-style curve shortening: replace segments by local p-geodesics and
// re-knot at constant-speed midpoints, alternating, until the energy decrease
// and the joint angle defects fall under cfg tolerances.
ShortenResult shorten(const Scene& scene,
                      const std::vector<ChartPoint>& polyline,
                      const PGeoCfg& cfg = {});

// Accumulated winding angle of a chart polyline around each hole of the
// scene (inner boundary circles; the axis for revolution charts). Two paths
// with common endpoints are homotopic iff the angles differ by < pi each.
std::vector<double> windingData(const Scene& scene,
                                const std::vector<ChartPoint>& polyline);
bool sameHomotopyClass(const std::vector<double>& a,
                       const std::vector<double>& b);

}  // namespace lensrig
