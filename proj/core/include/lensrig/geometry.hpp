#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "lensrig/errors.hpp"

namespace lensrig {

struct ChartPoint {
  double u = 0.0;
  double v = 0.0;
};

struct TangentVec {
  ChartPoint base;
  double du = 0.0;
  double dv = 0.0;
};

enum class MetricFamily { ConformalPlanar, SurfaceOfRevolution };

// Side selector for one-sided evaluation at profile kinks.
enum class Side { Auto, Below, Above };

// Conformal chart metric g = lambda^2 (du^2 + dv^2), lambda > 0, with
// hand-coded first and second partials.
struct ConformalFactor {
  std::function<double(double, double)> lam;
  std::function<double(double, double)> lam_u, lam_v;
  std::function<double(double, double)> lam_uu, lam_uv, lam_vv;
  // Chart domain is the open disk u^2+v^2 < chartRadius^2 (infinite = plane).
  double chartRadius = std::numeric_limits<double>::infinity();
};

// Surface-of-revolution metric g = dr^2 + f(r)^2 dtheta^2 on r in
// [rMin, rMax], theta unwrapped (normalize mod 2*pi only when reporting).
// f' is continuous; f'' may jump at the listed kink radii.
struct RevolutionProfile {
  std::function<double(double)> f, fp;
  std::function<double(double)> fppBelow, fppAbove;
  std::vector<double> kinks;
  double rMin = 0.0;
  double rMax = 0.0;
};

struct MetricSpec {
  MetricFamily family = MetricFamily::ConformalPlanar;
  std::string name;
  ConformalFactor conf;
  RevolutionProfile prof;

  bool chartContains(const ChartPoint& p) const;
  // Distance from p to the chart boundary in chart coordinates (cheap guard).
  double chartMargin(const ChartPoint& p) const;
};

// Gamma[k][i][j] = Gamma^k_{ij}, symmetric in (i,j). Index 0 = u/r, 1 = v/theta.
struct Christoffel {
  double G[2][2][2] = {};
};

double metricInner(const MetricSpec& m, const ChartPoint& base,
                   double du1, double dv1, double du2, double dv2);
double metricNorm(const MetricSpec& m, const TangentVec& w);

Christoffel christoffel(const MetricSpec& m, const ChartPoint& p,
                        Side side = Side::Auto);
double gaussCurvature(const MetricSpec& m, const ChartPoint& p,
                      Side side = Side::Auto);

// Named built-in metrics with exact derivatives. Throws ValidationError for
// unknown names. Names: "flat", "flat-polar", "sphere", "hyperbolic",
// "cylinder", "capped-cylinder", "remark-cone", "neck-cylinder",
// "neck-capped", "conformal:sphere", "conformal:hyperbolic".
const MetricSpec& metricRegistry(const std::string& name);
std::vector<std::string> metricRegistryNames();

// Angle of w against the metric-orthonormal frame of a unit reference vector:
// returns atan2(<w, rot90(ref)>, <w, ref>) where rot90 is the metric rotation
// by +pi/2 in chart orientation.
TangentVec metricRotate90(const MetricSpec& m, const TangentVec& w);

inline double normalizeAngle2Pi(double a) {
  double t = std::fmod(a, 2.0 * M_PI);
  if (t < 0) t += 2.0 * M_PI;
  return t;
}

}  // namespace lensrig
