#include "lensrig/geometry.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace lensrig {

namespace {

constexpr double kKinkWindow = 1e-12;

double sq(double x) { return x * x; }

}  // namespace

bool MetricSpec::chartContains(const ChartPoint& p) const {
  if (family == MetricFamily::ConformalPlanar) {
    if (!std::isfinite(p.u) || !std::isfinite(p.v)) return false;
    return std::hypot(p.u, p.v) < conf.chartRadius;
  }
  return p.u >= prof.rMin && p.u <= prof.rMax;
}

double MetricSpec::chartMargin(const ChartPoint& p) const {
  if (family == MetricFamily::ConformalPlanar) {
    return conf.chartRadius - std::hypot(p.u, p.v);
  }
  return std::min(p.u - prof.rMin, prof.rMax - p.u);
}

double metricInner(const MetricSpec& m, const ChartPoint& base,
                   double du1, double dv1, double du2, double dv2) {
  require(m.chartContains(base), ErrorCode::DomainError,
          "metricInner: point outside chart domain of metric '" + m.name + "'");
  if (m.family == MetricFamily::ConformalPlanar) {
    double l2 = sq(m.conf.lam(base.u, base.v));
    return l2 * (du1 * du2 + dv1 * dv2);
  }
  double f = m.prof.f(base.u);
  return du1 * du2 + sq(f) * dv1 * dv2;
}

double metricNorm(const MetricSpec& m, const TangentVec& w) {
  return std::sqrt(std::max(0.0, metricInner(m, w.base, w.du, w.dv, w.du, w.dv)));
}

Christoffel christoffel(const MetricSpec& m, const ChartPoint& p, Side) {
  require(m.chartContains(p), ErrorCode::DomainError,
          "christoffel: point outside chart domain of metric '" + m.name + "'");
  Christoffel c;
  if (m.family == MetricFamily::ConformalPlanar) {
    double l = m.conf.lam(p.u, p.v);
    double pu = m.conf.lam_u(p.u, p.v) / l;
    double pv = m.conf.lam_v(p.u, p.v) / l;
    // g = e^{2 phi} delta with phi = log(lambda)
    c.G[0][0][0] = pu;
    c.G[0][0][1] = c.G[0][1][0] = pv;
    c.G[0][1][1] = -pu;
    c.G[1][0][0] = -pv;
    c.G[1][0][1] = c.G[1][1][0] = pu;
    c.G[1][1][1] = pv;
    return c;
  }
  double f = m.prof.f(p.u);
  double fp = m.prof.fp(p.u);
  require(f > 0.0, ErrorCode::DomainError,
          "christoffel: profile vanishes at r = " + std::to_string(p.u));
  c.G[0][1][1] = -f * fp;
  c.G[1][0][1] = c.G[1][1][0] = fp / f;
  return c;
}

double gaussCurvature(const MetricSpec& m, const ChartPoint& p, Side side) {
  require(m.chartContains(p), ErrorCode::DomainError,
          "gaussCurvature: point outside chart domain of metric '" + m.name + "'");
  if (m.family == MetricFamily::ConformalPlanar) {
    double l = m.conf.lam(p.u, p.v);
    double lu = m.conf.lam_u(p.u, p.v), lv = m.conf.lam_v(p.u, p.v);
    double luu = m.conf.lam_uu(p.u, p.v), lvv = m.conf.lam_vv(p.u, p.v);
    // Delta log(lambda) = (l*luu - lu^2 + l*lvv - lv^2) / l^2
    double dlog = (l * (luu + lvv) - sq(lu) - sq(lv)) / sq(l);
    return -dlog / sq(l);
  }
  double r = p.u;
  if (side == Side::Auto) {
    for (double k : m.prof.kinks) {
      if (std::abs(r - k) < kKinkWindow) {
        std::ostringstream os;
        os << "gaussCurvature: second derivative of profile '" << m.name
           << "' is one-sided at kink r = " << k
           << "; pass an explicit side";
        throw Error(ErrorCode::KinkError, os.str());
      }
    }
  }
  double f = m.prof.f(r);
  require(f > 0.0, ErrorCode::DomainError,
          "gaussCurvature: profile vanishes at r = " + std::to_string(r));
  double fpp = (side == Side::Below) ? m.prof.fppBelow(r)
             : (side == Side::Above) ? m.prof.fppAbove(r)
                                     : m.prof.fppBelow(r);  // equal when C2
  return -fpp / f;
}

TangentVec metricRotate90(const MetricSpec& m, const TangentVec& w) {
  TangentVec out;
  out.base = w.base;
  if (m.family == MetricFamily::ConformalPlanar) {
    out.du = -w.dv;
    out.dv = w.du;
    return out;
  }
  // Orthonormal frame (d_r, d_theta/f): components (a, b f) rotate to
  // (-b f, a), i.e. chart components (-b f, a / f).
  double f = m.prof.f(w.base.u);
  out.du = -w.dv * f;
  out.dv = w.du / f;
  return out;
}

namespace {

MetricSpec makeConformal(const std::string& name,
                         std::function<double(double, double)> lam,
                         std::function<double(double, double)> lu,
                         std::function<double(double, double)> lv,
                         std::function<double(double, double)> luu,
                         std::function<double(double, double)> luv,
                         std::function<double(double, double)> lvv,
                         double chartRadius) {
  MetricSpec m;
  m.family = MetricFamily::ConformalPlanar;
  m.name = name;
  m.conf = ConformalFactor{std::move(lam), std::move(lu), std::move(lv),
                           std::move(luu), std::move(luv), std::move(lvv),
                           chartRadius};
  return m;
}

MetricSpec makeRevolution(const std::string& name,
                          std::function<double(double)> f,
                          std::function<double(double)> fp,
                          std::function<double(double)> fppB,
                          std::function<double(double)> fppA,
                          std::vector<double> kinks, double rMin, double rMax) {
  MetricSpec m;
  m.family = MetricFamily::SurfaceOfRevolution;
  m.name = name;
  m.prof = RevolutionProfile{std::move(f), std::move(fp), std::move(fppB),
                             std::move(fppA), std::move(kinks), rMin, rMax};
  return m;
}

// ---------------------------------------------------------------------------
// Cone-to-hyperbolic profile: f(r) = r/3 for r <= 1/10, f(r) = sinh(r) for
// r >= b1, and a monotone power-smoothstep blend of f' in between, tuned so
// that f(b1) = sinh(b1) exactly (hence f = sinh on [b1, 1] as well). The blend
// keeps f' > 0 and f'' >= 0, so K = -f''/f <= 0 everywhere.
// ---------------------------------------------------------------------------
struct ConeProfile {
  static constexpr double a0 = 0.1;
  static constexpr double b1 = 0.95;
  double gamma = 0.0;
  double w = b1 - a0;
  double amp = 0.0;  // cosh(b1) - 1/3

  ConeProfile() {
    amp = std::cosh(b1) - 1.0 / 3.0;
    // Target mean of the smoothstep over [0,1] so that
    //   1/30 + w/3 + amp*w*mu = sinh(b1).
    double mu = (std::sinh(b1) - 1.0 / 30.0 - w / 3.0) / (amp * w);
    // g(gamma) = int_0^1 S2(x^gamma) dx, strictly decreasing in gamma.
    auto g = [](double gm) {
      return 10.0 / (3 * gm + 1) - 15.0 / (4 * gm + 1) + 6.0 / (5 * gm + 1);
    };
    double lo = 1.0 / 3.0 + 1e-6, hi = 4.0;
    for (int i = 0; i < 200; ++i) {
      double mid = 0.5 * (lo + hi);
      (g(mid) > mu ? lo : hi) = mid;
    }
    gamma = 0.5 * (lo + hi);
  }

  static double s2(double t) { return ((6 * t - 15) * t + 10) * t * t * t; }
  static double s2p(double t) { return 30.0 * sq(t) * sq(1.0 - t); }

  double f(double r) const {
    if (r <= a0) return r / 3.0;
    if (r >= b1) return std::sinh(r);
    double x = (r - a0) / w;
    double I = 10.0 * std::pow(x, 3 * gamma + 1) / (3 * gamma + 1) -
               15.0 * std::pow(x, 4 * gamma + 1) / (4 * gamma + 1) +
               6.0 * std::pow(x, 5 * gamma + 1) / (5 * gamma + 1);
    return 1.0 / 30.0 + (r - a0) / 3.0 + amp * w * I;
  }
  double fp(double r) const {
    if (r <= a0) return 1.0 / 3.0;
    if (r >= b1) return std::cosh(r);
    double x = (r - a0) / w;
    return 1.0 / 3.0 + amp * s2(std::pow(x, gamma));
  }
  double fpp(double r, bool below) const {
    if (below ? (r <= a0) : (r < a0)) return 0.0;
    if (below ? (r > b1) : (r >= b1)) return std::sinh(r);
    double x = (r - a0) / w;
    if (x <= 0.0) return 0.0;
    double t = std::pow(x, gamma);
    return amp * s2p(t) * gamma * std::pow(x, gamma - 1.0) / w;
  }
};

const std::map<std::string, MetricSpec>& registry() {
  static const std::map<std::string, MetricSpec>* reg = [] {
    auto* r = new std::map<std::string, MetricSpec>;
    auto zero2 = [](double, double) { return 0.0; };
    auto one2 = [](double, double) { return 1.0; };
    const double inf = std::numeric_limits<double>::infinity();

    (*r)["flat"] = makeConformal("flat", one2, zero2, zero2, zero2, zero2,
                                 zero2, inf);

    // Stereographic chart of the unit sphere: lambda = 2/(1+u^2+v^2), K = +1.
    {
      auto lam = [](double u, double v) { return 2.0 / (1 + u * u + v * v); };
      auto lu = [](double u, double v) {
        double s = 1 + u * u + v * v;
        return -4.0 * u / sq(s);
      };
      auto lv = [](double u, double v) {
        double s = 1 + u * u + v * v;
        return -4.0 * v / sq(s);
      };
      auto luu = [](double u, double v) {
        double s = 1 + u * u + v * v;
        return (-4.0 * s + 16.0 * u * u) / (s * s * s);
      };
      auto luv = [](double u, double v) {
        double s = 1 + u * u + v * v;
        return 16.0 * u * v / (s * s * s);
      };
      auto lvv = [](double u, double v) {
        double s = 1 + u * u + v * v;
        return (-4.0 * s + 16.0 * v * v) / (s * s * s);
      };
      (*r)["conformal:sphere"] =
          makeConformal("conformal:sphere", lam, lu, lv, luu, luv, lvv, inf);
    }

    // Poincare disk: lambda = 2/(1-u^2-v^2), K = -1, chart |x| < 1.
    {
      auto lam = [](double u, double v) { return 2.0 / (1 - u * u - v * v); };
      auto lu = [](double u, double v) {
        double s = 1 - u * u - v * v;
        return 4.0 * u / sq(s);
      };
      auto lv = [](double u, double v) {
        double s = 1 - u * u - v * v;
        return 4.0 * v / sq(s);
      };
      auto luu = [](double u, double v) {
        double s = 1 - u * u - v * v;
        return (4.0 * s + 16.0 * u * u) / (s * s * s);
      };
      auto luv = [](double u, double v) {
        double s = 1 - u * u - v * v;
        return 16.0 * u * v / (s * s * s);
      };
      auto lvv = [](double u, double v) {
        double s = 1 - u * u - v * v;
        return (4.0 * s + 16.0 * v * v) / (s * s * s);
      };
      (*r)["conformal:hyperbolic"] = makeConformal(
          "conformal:hyperbolic", lam, lu, lv, luu, luv, lvv, 1.0);
    }

    auto idf = [](double x) { return x; };
    auto one1 = [](double) { return 1.0; };
    auto zero1 = [](double) { return 0.0; };

    (*r)["flat-polar"] =
        makeRevolution("flat-polar", idf, one1, zero1, zero1, {}, 1e-12, 1e6);

    (*r)["sphere"] = makeRevolution(
        "sphere", [](double x) { return std::sin(x); },
        [](double x) { return std::cos(x); },
        [](double x) { return -std::sin(x); },
        [](double x) { return -std::sin(x); }, {}, 1e-12, M_PI - 1e-12);

    (*r)["hyperbolic"] = makeRevolution(
        "hyperbolic", [](double x) { return std::sinh(x); },
        [](double x) { return std::cosh(x); },
        [](double x) { return std::sinh(x); },
        [](double x) { return std::sinh(x); }, {}, 1e-12, 20.0);

    // Chart bounds extend past the scene domain so that trial integrator
    // stages just beyond a boundary stay evaluable.
    (*r)["cylinder"] =
        makeRevolution("cylinder", one1, zero1, zero1, zero1, {}, -1.0, 3.0);

    // Flat cylinder of height 2 continued by a unit hemisphere; C^{1,1} at
    // the seam r = 2 (f'' jumps 0 -> -1), pole of the cap at r = 2 + pi/2.
    {
      auto f = [](double x) { return x <= 2.0 ? 1.0 : std::cos(x - 2.0); };
      auto fp = [](double x) { return x <= 2.0 ? 0.0 : -std::sin(x - 2.0); };
      auto fppB = [](double x) { return x <= 2.0 ? 0.0 : -std::cos(x - 2.0); };
      auto fppA = [](double x) { return x < 2.0 ? 0.0 : -std::cos(x - 2.0); };
      (*r)["capped-cylinder"] = makeRevolution("capped-cylinder", f, fp, fppB,
                                               fppA, {2.0}, -1.0, 2.0 + M_PI_2);
    }

    {
      ConeProfile cp;
      auto f = [cp](double x) { return cp.f(x); };
      auto fp = [cp](double x) { return cp.fp(x); };
      auto fppB = [cp](double x) { return cp.fpp(x, true); };
      auto fppA = [cp](double x) { return cp.fpp(x, false); };
      (*r)["remark-cone"] = makeRevolution(
          "remark-cone", f, fp, fppB, fppA,
          {ConeProfile::a0, ConeProfile::b1}, 1e-6, 20.0);
    }

    // Cylinder with a waist: f dips to 0.7 at r = 1 (a closed geodesic that
    // separates boundary geodesics into through-the-neck and turned-back
    // classes). "neck-capped" continues with the unit hemisphere.
    {
      auto f = [](double x) {
        if (x >= 2.0) return std::cos(x - 2.0);
        return 1.0 - 0.3 * sq(std::sin(M_PI_2 * x));
      };
      auto fp = [](double x) {
        if (x >= 2.0) return -std::sin(x - 2.0);
        return -0.3 * M_PI_2 * std::sin(M_PI * x);
      };
      auto fppNeck = [](double x) { return -0.3 * M_PI_2 * M_PI * std::cos(M_PI * x); };
      auto fppB = [fppNeck](double x) {
        return x <= 2.0 ? fppNeck(x) : -std::cos(x - 2.0);
      };
      auto fppA = [fppNeck](double x) {
        return x < 2.0 ? fppNeck(x) : -std::cos(x - 2.0);
      };
      (*r)["neck-capped"] = makeRevolution("neck-capped", f, fp, fppB, fppA,
                                           {2.0}, -1.0, 2.0 + M_PI_2);
      auto fN = [](double x) { return 1.0 - 0.3 * sq(std::sin(M_PI_2 * x)); };
      auto fpN = [](double x) { return -0.3 * M_PI_2 * std::sin(M_PI * x); };
      (*r)["neck-cylinder"] = makeRevolution("neck-cylinder", fN, fpN, fppNeck,
                                             fppNeck, {}, -1.0, 3.0);
    }
    return r;
  }();
  return *reg;
}

}  // namespace

const MetricSpec& metricRegistry(const std::string& name) {
  auto& reg = registry();
  auto it = reg.find(name);
  require(it != reg.end(), ErrorCode::ValidationError,
          "unknown metric registry name '" + name + "'");
  return it->second;
}

std::vector<std::string> metricRegistryNames() {
  std::vector<std::string> out;
  for (auto& [k, v] : registry()) out.push_back(k);
  return out;
}

}  // namespace lensrig
