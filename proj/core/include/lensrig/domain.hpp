#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lensrig/geometry.hpp"

namespace lensrig {

// Closed boundary curve, arclength-parameterized, positively oriented
// (interior of the domain on the left, so the inward normal is the metric
// +90-degree rotation of the tangent). Subclasses supply a native
// parameterization on [0, 2*pi); the base class builds a high-accuracy
// arclength table once at construction.
class BoundaryCurve {
 public:
  explicit BoundaryCurve(std::shared_ptr<const MetricSpec> metric)
      : metric_(std::move(metric)) {}
  virtual ~BoundaryCurve() = default;

  virtual ChartPoint pos(double phi) const = 0;
  // First and second derivatives of pos with respect to phi.
  virtual void derivs(double phi, double d1[2], double d2[2]) const = 0;
  // Signed transverse coordinate: 0 on the curve, > 0 on the domain side.
  // Not a distance; only the zero set and sign are meaningful.
  virtual double signedOffset(const ChartPoint& p) const = 0;
  // d/dt of signedOffset along a chart velocity (du, dv); used by the event
  // scan to catch shallow grazing dips between scan points.
  virtual double offsetRate(const ChartPoint& p, double du,
                            double dv) const = 0;
  virtual double nearestPhi(const ChartPoint& p) const = 0;

  double length() const { return L_; }
  double sFromPhi(double phi) const;
  double phiFromS(double s) const;

  ChartPoint point(double s) const { return pos(phiFromS(s)); }
  TangentVec tangent(double s) const;        // unit in the scene metric
  TangentVec inwardNormal(double s) const;   // unit, points into the domain
  double geodesicCurvature(double s) const;  // signed: > 0 strictly convex
  double nearestArclength(const ChartPoint& p) const;

  const MetricSpec& metric() const { return *metric_; }

 protected:
  void buildTable();
  double speedAt(double phi) const;

  std::shared_ptr<const MetricSpec> metric_;
  std::vector<double> cumS_;  // arclength at phi = 2*pi*i/N, i = 0..N
  double L_ = 0.0;
};

// Euclidean chart circle; `interiorInside` false makes it the boundary of a
// hole (parameterized clockwise so the domain stays on the left).
class ChartCircle final : public BoundaryCurve {
 public:
  ChartCircle(std::shared_ptr<const MetricSpec> metric, ChartPoint center,
              double radius, bool interiorInside);
  ChartPoint pos(double phi) const override;
  void derivs(double phi, double d1[2], double d2[2]) const override;
  double signedOffset(const ChartPoint& p) const override;
  double offsetRate(const ChartPoint& p, double du, double dv) const override;
  double nearestPhi(const ChartPoint& p) const override;

  ChartPoint center() const { return center_; }
  double radius() const { return radius_; }
  bool interiorInside() const { return inside_; }

 private:
  ChartPoint center_;
  double radius_;
  bool inside_;
};

// Circle r = r0 on a surface of revolution; `domainAbove` true when the scene
// occupies r > r0.
class RLevelCircle final : public BoundaryCurve {
 public:
  RLevelCircle(std::shared_ptr<const MetricSpec> metric, double r0,
               bool domainAbove);
  ChartPoint pos(double phi) const override;
  void derivs(double phi, double d1[2], double d2[2]) const override;
  double signedOffset(const ChartPoint& p) const override;
  double offsetRate(const ChartPoint& p, double du, double dv) const override;
  double nearestPhi(const ChartPoint& p) const override;

  double level() const { return r0_; }
  bool domainAbove() const { return above_; }

 private:
  double r0_;
  bool above_;
};

// Star-shaped polar curve rho(psi) = 1 + a*cos(2*psi) in a planar chart
// ("peanut" for a > 1/5: geodesic curvature changes sign four times).
class PolarCurve final : public BoundaryCurve {
 public:
  PolarCurve(std::shared_ptr<const MetricSpec> metric, double a);
  ChartPoint pos(double phi) const override;
  void derivs(double phi, double d1[2], double d2[2]) const override;
  double signedOffset(const ChartPoint& p) const override;
  double offsetRate(const ChartPoint& p, double du, double dv) const override;
  double nearestPhi(const ChartPoint& p) const override;

  double waistParam() const { return a_; }

 private:
  double rho(double psi) const;
  double a_;
};

// Isometric identification s -> s + L/2 (mod L) on one boundary circle.
struct AntipodalGluing {
  int boundaryIndex = -1;
  double apply(double s, double L) const {
    double t = std::fmod(s + 0.5 * L, L);
    return t < 0 ? t + L : t;
  }
};

struct BoundaryClassification;

struct Scene {
  std::string name;
  std::shared_ptr<const MetricSpec> metricPtr;
  std::vector<std::shared_ptr<const BoundaryCurve>> boundaries;
  std::optional<AntipodalGluing> gluing;
  double diameterHint = 0.0;  // filled at load; used for default max_length
  // Precomputed by finalizeScene; required by the flow module.
  std::shared_ptr<const BoundaryClassification> classification;

  const MetricSpec& metric() const { return *metricPtr; }
  bool contains(const ChartPoint& p, double tol = 0.0) const;
  bool isGluedBoundary(int idx) const {
    return gluing && gluing->boundaryIndex == idx;
  }
  // Indices of true (non-glued) boundary components.
  std::vector<int> scatteringBoundaries() const;
  double diameterEstimate() const;
};

enum class BoundaryClass { SPlus, SMinus, SZero };

inline const char* boundaryClassName(BoundaryClass c) {
  switch (c) {
    case BoundaryClass::SPlus: return "S+";
    case BoundaryClass::SMinus: return "S-";
    case BoundaryClass::SZero: return "S0";
  }
  return "?";
}

struct ClassifiedArc {
  int boundary = 0;
  double s0 = 0.0, s1 = 0.0;  // arc runs from s0 to s1 (mod L), open ends
  BoundaryClass cls = BoundaryClass::SPlus;
};

struct SwitchPoint {
  int boundary = 0;
  double s = 0.0;
};

struct BoundaryClassification {
  std::vector<ClassifiedArc> arcs;
  std::vector<SwitchPoint> switchPoints;
  bool finiteAtResolution = true;

  BoundaryClass classAt(int boundary, double s, double L) const;
  double nearestSwitchDistance(int boundary, double s, double L) const;
};

struct BoundaryFrame {
  ChartPoint point;
  TangentVec tangent;
  TangentVec normal;
  double kg = 0.0;
};

BoundaryFrame boundaryFrame(const Scene& scene, int boundaryIdx, double s);

BoundaryClassification classifyBoundary(const Scene& scene,
                                        double tolKg = 1e-9,
                                        int samplesPerBoundary = 4096,
                                        int maxSwitchPoints = 64);

// Unit vector cos(theta)*T(s) + sin(theta)*nu(s), theta in (0, pi) measured
// from the oriented boundary tangent toward the inward normal.
TangentVec liftUnitTangent(const Scene& scene, int boundaryIdx, double s,
                           double theta);

// Classifies boundaries and fills the diameter hint. Every scene must pass
// through here (loadScene does) before being handed to the flow module.
void finalizeScene(Scene& scene, double tolKg = 1e-9);

}  // namespace lensrig
