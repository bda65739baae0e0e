#include "lensrig/domain.hpp"

#include <algorithm>
#include <cmath>

namespace lensrig {

namespace {

constexpr int kTableCells = 1024;

// 16-point Gauss-Legendre nodes/weights on [0, 1].
const double kGLx[16] = {
    0.0052995325041750337, 0.0277124884633837046, 0.0671843988060841224,
    0.1222977958224984867, 0.1910618777986781147, 0.2709916111713863151,
    0.3591982246103705422, 0.4524937450811812866, 0.5475062549188187134,
    0.6408017753896294578, 0.7290083888286136849, 0.8089381222013218853,
    0.8777022041775015133, 0.9328156011939158776, 0.9722875115366162954,
    0.9947004674958249663};
const double kGLw[16] = {
    0.0135762297058770482, 0.0311267619693239468, 0.0475792558412463928,
    0.0623144856277669384, 0.0747979944082883680, 0.0845782596975012679,
    0.0913017075224617918, 0.0947253052275342510, 0.0947253052275342510,
    0.0913017075224617918, 0.0845782596975012679, 0.0747979944082883680,
    0.0623144856277669384, 0.0475792558412463928, 0.0311267619693239468,
    0.0135762297058770482};

}  // namespace

double BoundaryCurve::speedAt(double phi) const {
  double d1[2], d2[2];
  derivs(phi, d1, d2);
  ChartPoint p = pos(phi);
  return std::sqrt(
      std::max(0.0, metricInner(*metric_, p, d1[0], d1[1], d1[0], d1[1])));
}

void BoundaryCurve::buildTable() {
  cumS_.assign(kTableCells + 1, 0.0);
  const double h = 2.0 * M_PI / kTableCells;
  for (int i = 0; i < kTableCells; ++i) {
    double a = i * h, acc = 0.0;
    for (int k = 0; k < 16; ++k) acc += kGLw[k] * speedAt(a + h * kGLx[k]);
    cumS_[i + 1] = cumS_[i] + acc * h;
  }
  L_ = cumS_.back();
}

double BoundaryCurve::sFromPhi(double phi) const {
  phi = normalizeAngle2Pi(phi);
  const double h = 2.0 * M_PI / kTableCells;
  int cell = std::min<int>(kTableCells - 1, static_cast<int>(phi / h));
  double a = cell * h, acc = 0.0, w = phi - a;
  for (int k = 0; k < 16; ++k) acc += kGLw[k] * speedAt(a + w * kGLx[k]);
  return cumS_[cell] + acc * w;
}

double BoundaryCurve::phiFromS(double s) const {
  s = std::fmod(s, L_);
  if (s < 0) s += L_;
  auto it = std::upper_bound(cumS_.begin(), cumS_.end(), s);
  int cell = std::max<int>(0, int(it - cumS_.begin()) - 1);
  const double h = 2.0 * M_PI / kTableCells;
  double phi = cell * h;
  // Newton on sFromPhi(phi) = s; speed is bounded away from zero.
  for (int iter = 0; iter < 60; ++iter) {
    double g = sFromPhi(phi) - s;
    double sp = speedAt(phi);
    double step = g / sp;
    phi -= step;
    if (phi < cell * h - h) phi = cell * h - h;
    if (phi > cell * h + 2 * h) phi = cell * h + 2 * h;
    if (std::abs(step) < 1e-15) break;
  }
  return normalizeAngle2Pi(phi);
}

TangentVec BoundaryCurve::tangent(double s) const {
  double phi = phiFromS(s);
  double d1[2], d2[2];
  derivs(phi, d1, d2);
  double sp = speedAt(phi);
  TangentVec t;
  t.base = pos(phi);
  t.du = d1[0] / sp;
  t.dv = d1[1] / sp;
  return t;
}

TangentVec BoundaryCurve::inwardNormal(double s) const {
  return metricRotate90(*metric_, tangent(s));
}

double BoundaryCurve::geodesicCurvature(double s) const {
  double phi = phiFromS(s);
  double d1[2], d2[2];
  derivs(phi, d1, d2);
  ChartPoint p = pos(phi);
  Christoffel G = christoffel(*metric_, p);
  // Covariant acceleration of the phi-parameterization; since <c', nu> = 0,
  // k_g = <A, nu> / speed^2.
  double A[2];
  for (int k = 0; k < 2; ++k) {
    A[k] = d2[k];
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) A[k] += G.G[k][i][j] * d1[i] * d1[j];
  }
  double sp2 = metricInner(*metric_, p, d1[0], d1[1], d1[0], d1[1]);
  TangentVec nu = inwardNormal(s);
  return metricInner(*metric_, p, A[0], A[1], nu.du, nu.dv) / sp2;
}

double BoundaryCurve::nearestArclength(const ChartPoint& p) const {
  double phi = nearestPhi(p);
  // Refine: chart-euclidean projection, <c(phi) - p, c'(phi)> = 0.
  for (int iter = 0; iter < 40; ++iter) {
    double d1[2], d2[2];
    derivs(phi, d1, d2);
    ChartPoint c = pos(phi);
    double ru = c.u - p.u, rv = c.v - p.v;
    double g = ru * d1[0] + rv * d1[1];
    double gp = d1[0] * d1[0] + d1[1] * d1[1] + ru * d2[0] + rv * d2[1];
    if (gp == 0) break;
    double step = g / gp;
    phi -= step;
    if (std::abs(step) < 1e-15) break;
  }
  return sFromPhi(phi);
}

// ---------------------------------------------------------------------------
// ChartCircle
// ---------------------------------------------------------------------------

ChartCircle::ChartCircle(std::shared_ptr<const MetricSpec> metric,
                         ChartPoint center, double radius, bool interiorInside)
    : BoundaryCurve(std::move(metric)), center_(center), radius_(radius),
      inside_(interiorInside) {
  require(radius > 0, ErrorCode::ValidationError, "circle radius must be > 0");
  buildTable();
}

ChartPoint ChartCircle::pos(double phi) const {
  double psi = inside_ ? phi : -phi;
  return {center_.u + radius_ * std::cos(psi),
          center_.v + radius_ * std::sin(psi)};
}

void ChartCircle::derivs(double phi, double d1[2], double d2[2]) const {
  double psi = inside_ ? phi : -phi;
  double sgn = inside_ ? 1.0 : -1.0;
  d1[0] = -radius_ * std::sin(psi) * sgn;
  d1[1] = radius_ * std::cos(psi) * sgn;
  d2[0] = -radius_ * std::cos(psi);
  d2[1] = -radius_ * std::sin(psi);
}

double ChartCircle::signedOffset(const ChartPoint& p) const {
  double d = std::hypot(p.u - center_.u, p.v - center_.v);
  return inside_ ? radius_ - d : d - radius_;
}

double ChartCircle::offsetRate(const ChartPoint& p, double du,
                               double dv) const {
  double rx = p.u - center_.u, ry = p.v - center_.v;
  double d = std::hypot(rx, ry);
  if (d < 1e-300) return 0.0;
  double rad = (rx * du + ry * dv) / d;
  return inside_ ? -rad : rad;
}

double ChartCircle::nearestPhi(const ChartPoint& p) const {
  double psi = std::atan2(p.v - center_.v, p.u - center_.u);
  return normalizeAngle2Pi(inside_ ? psi : -psi);
}

// ---------------------------------------------------------------------------
// RLevelCircle
// ---------------------------------------------------------------------------

RLevelCircle::RLevelCircle(std::shared_ptr<const MetricSpec> metric, double r0,
                           bool domainAbove)
    : BoundaryCurve(std::move(metric)), r0_(r0), above_(domainAbove) {
  require(metric_->family == MetricFamily::SurfaceOfRevolution,
          ErrorCode::ValidationError,
          "r-level boundary requires a revolution metric");
  require(metric_->prof.f(r0) > 0, ErrorCode::ValidationError,
          "r-level boundary where profile vanishes");
  buildTable();
}

ChartPoint RLevelCircle::pos(double phi) const {
  return {r0_, above_ ? -phi : phi};
}

void RLevelCircle::derivs(double phi, double d1[2], double d2[2]) const {
  (void)phi;
  d1[0] = 0.0;
  d1[1] = above_ ? -1.0 : 1.0;
  d2[0] = d2[1] = 0.0;
}

double RLevelCircle::signedOffset(const ChartPoint& p) const {
  return above_ ? p.u - r0_ : r0_ - p.u;
}

double RLevelCircle::offsetRate(const ChartPoint& p, double du,
                                double dv) const {
  (void)p;
  (void)dv;
  return above_ ? du : -du;
}

double RLevelCircle::nearestPhi(const ChartPoint& p) const {
  return normalizeAngle2Pi(above_ ? -p.v : p.v);
}

// ---------------------------------------------------------------------------
// PolarCurve
// ---------------------------------------------------------------------------

PolarCurve::PolarCurve(std::shared_ptr<const MetricSpec> metric, double a)
    : BoundaryCurve(std::move(metric)), a_(a) {
  require(a > 0 && a < 1, ErrorCode::ValidationError,
          "peanut parameter must lie in (0, 1)");
  buildTable();
}

double PolarCurve::rho(double psi) const { return 1.0 + a_ * std::cos(2 * psi); }

ChartPoint PolarCurve::pos(double phi) const {
  double r = rho(phi);
  return {r * std::cos(phi), r * std::sin(phi)};
}

void PolarCurve::derivs(double phi, double d1[2], double d2[2]) const {
  double r = rho(phi);
  double rp = -2.0 * a_ * std::sin(2 * phi);
  double rpp = -4.0 * a_ * std::cos(2 * phi);
  double c = std::cos(phi), s = std::sin(phi);
  d1[0] = rp * c - r * s;
  d1[1] = rp * s + r * c;
  d2[0] = rpp * c - 2 * rp * s - r * c;
  d2[1] = rpp * s + 2 * rp * c - r * s;
}

double PolarCurve::signedOffset(const ChartPoint& p) const {
  double psi = std::atan2(p.v, p.u);
  return rho(psi) - std::hypot(p.u, p.v);
}

double PolarCurve::offsetRate(const ChartPoint& p, double du,
                              double dv) const {
  double d2 = p.u * p.u + p.v * p.v;
  if (d2 < 1e-300) return 0.0;
  double d = std::sqrt(d2);
  double rhop = -2.0 * a_ * std::sin(2 * std::atan2(p.v, p.u));
  double phidot = (p.u * dv - p.v * du) / d2;
  return rhop * phidot - (p.u * du + p.v * dv) / d;
}

double PolarCurve::nearestPhi(const ChartPoint& p) const {
  return normalizeAngle2Pi(std::atan2(p.v, p.u));
}

// ---------------------------------------------------------------------------
// Scene
// ---------------------------------------------------------------------------

bool Scene::contains(const ChartPoint& p, double tol) const {
  if (!metric().chartContains(p)) return false;
  for (auto& b : boundaries)
    if (b->signedOffset(p) < -tol) return false;
  return true;
}

std::vector<int> Scene::scatteringBoundaries() const {
  std::vector<int> out;
  for (int i = 0; i < (int)boundaries.size(); ++i)
    if (!isGluedBoundary(i)) out.push_back(i);
  return out;
}

double Scene::diameterEstimate() const {
  if (diameterHint > 0) return diameterHint;
  double est = 0.0;
  for (auto& b : boundaries) est += b->length();
  if (metric().family == MetricFamily::SurfaceOfRevolution)
    est += metric().prof.rMax - metric().prof.rMin;
  return std::max(est, 1.0);
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

BoundaryFrame boundaryFrame(const Scene& scene, int boundaryIdx, double s) {
  require(boundaryIdx >= 0 && boundaryIdx < (int)scene.boundaries.size(),
          ErrorCode::ValidationError, "boundary index out of range");
  const BoundaryCurve& c = *scene.boundaries[boundaryIdx];
  BoundaryFrame f;
  f.point = c.point(s);
  f.tangent = c.tangent(s);
  f.normal = c.inwardNormal(s);
  f.kg = c.geodesicCurvature(s);
  return f;
}

TangentVec liftUnitTangent(const Scene& scene, int boundaryIdx, double s,
                           double theta) {
  require(theta > 0.0 && theta < M_PI, ErrorCode::DomainError,
          "liftUnitTangent: theta must lie in (0, pi)");
  BoundaryFrame f = boundaryFrame(scene, boundaryIdx, s);
  TangentVec x;
  x.base = f.point;
  double ct = std::cos(theta), st = std::sin(theta);
  x.du = ct * f.tangent.du + st * f.normal.du;
  x.dv = ct * f.tangent.dv + st * f.normal.dv;
  return x;
}

BoundaryClass BoundaryClassification::classAt(int boundary, double s,
                                              double L) const {
  s = std::fmod(s, L);
  if (s < 0) s += L;
  for (auto& a : arcs) {
    if (a.boundary != boundary) continue;
    if (a.s0 <= a.s1) {
      if (s >= a.s0 && s <= a.s1) return a.cls;
    } else {
      if (s >= a.s0 || s <= a.s1) return a.cls;
    }
  }
  // s sits exactly on a switch point; report the class just after it.
  for (auto& a : arcs)
    if (a.boundary == boundary) return a.cls;
  return BoundaryClass::SPlus;
}

double BoundaryClassification::nearestSwitchDistance(int boundary, double s,
                                                     double L) const {
  s = std::fmod(s, L);
  if (s < 0) s += L;
  double best = std::numeric_limits<double>::infinity();
  for (auto& sw : switchPoints) {
    if (sw.boundary != boundary) continue;
    double d = std::abs(sw.s - s);
    d = std::min(d, L - d);
    best = std::min(best, d);
  }
  return best;
}

void finalizeScene(Scene& scene, double tolKg) {
  scene.classification = std::make_shared<const BoundaryClassification>(
      classifyBoundary(scene, tolKg));
  if (scene.diameterHint <= 0) {
    double est = 0.0;
    for (auto& b : scene.boundaries) est += b->length();
    if (scene.metric().family == MetricFamily::SurfaceOfRevolution)
      est += scene.metric().prof.rMax - scene.metric().prof.rMin;
    scene.diameterHint = std::max(est, 1.0);
  }
}

BoundaryClassification classifyBoundary(const Scene& scene, double tolKg,
                                        int samplesPerBoundary,
                                        int maxSwitchPoints) {
  BoundaryClassification out;
  for (int b = 0; b < (int)scene.boundaries.size(); ++b) {
    const BoundaryCurve& curve = *scene.boundaries[b];
    const double L = curve.length();
    const int n = samplesPerBoundary;
    std::vector<double> kg(n);
    std::vector<int> lab(n);  // -1, 0, +1
    for (int i = 0; i < n; ++i) {
      kg[i] = curve.geodesicCurvature(L * i / n);
      lab[i] = (kg[i] > tolKg) ? 1 : (kg[i] < -tolKg ? -1 : 0);
    }
    bool allSame = std::all_of(lab.begin(), lab.end(),
                               [&](int l) { return l == lab[0]; });
    if (allSame) {
      ClassifiedArc a;
      a.boundary = b;
      a.s0 = 0.0;
      a.s1 = L;
      a.cls = lab[0] > 0 ? BoundaryClass::SPlus
            : lab[0] < 0 ? BoundaryClass::SMinus : BoundaryClass::SZero;
      out.arcs.push_back(a);
      continue;
    }

    // Locate transitions between (merged) runs of equal labels. A zero run
    // shorter than the transition window collapses to a single switch point;
    // a long zero run is an S0 arc whose endpoints are switch points.
    auto bisectZero = [&](double sa, double sb) {
      double fa = curve.geodesicCurvature(sa);
      for (int it = 0; it < 80; ++it) {
        double sm = 0.5 * (sa + sb);
        double fm = curve.geodesicCurvature(sm);
        if ((fa <= 0) == (fm <= 0)) {
          sa = sm;
          fa = fm;
        } else {
          sb = sm;
        }
      }
      return 0.5 * (sa + sb);
    };

    // Run-length encode with wraparound.
    struct Run { int label; int i0; int len; };
    std::vector<Run> runs;
    int start = 0;
    while (start < n && lab[start] == lab[(start + n - 1) % n]) ++start;
    if (start == n) start = 0;  // fully uniform handled above; safety
    for (int cnt = 0; cnt < n;) {
      int i = (start + cnt) % n;
      int l = lab[i];
      int len = 0;
      while (len < n - cnt && lab[(start + cnt + len) % n] == l) ++len;
      runs.push_back({l, i, len});
      cnt += len;
    }

    const int zeroWindow = 3;  // zero runs this short collapse to a point
    std::vector<std::pair<double, BoundaryClass>> arcStarts;  // (switch s, class after)
    auto sAt = [&](int idx) { return L * (idx % n) / n; };

    for (size_t k = 0; k < runs.size(); ++k) {
      const Run& cur = runs[k];
      const Run& nxt = runs[(k + 1) % runs.size()];
      if (cur.label == 0 && cur.len >= zeroWindow) {
        // S0 arc: switch points at both ends handled by neighbors' entries.
        continue;
      }
      if (cur.label == 0) continue;  // short zero run: handled at transition
      // Transition from cur to the next nonzero or long-zero run.
      double sa = sAt(cur.i0 + cur.len - 1);
      double sb = sAt(cur.i0 + cur.len + (nxt.label == 0 && nxt.len < zeroWindow
                                              ? nxt.len
                                              : 0));
      double sw;
      const Run& after = (nxt.label == 0 && nxt.len < zeroWindow)
                             ? runs[(k + 2) % runs.size()]
                             : nxt;
      if (after.label != 0 && after.label != cur.label) {
        sw = bisectZero(sa, sb == sa ? sa + L / n : sb);
      } else {
        // entering/leaving an S0 arc (or same label через a dip): midpoint
        sw = 0.5 * (sa + (sb >= sa ? sb : sb + L)) ;
        sw = std::fmod(sw, L);
      }
      BoundaryClass clsAfter =
          after.label > 0 ? BoundaryClass::SPlus
          : after.label < 0 ? BoundaryClass::SMinus : BoundaryClass::SZero;
      arcStarts.push_back({sw, clsAfter});
    }
    // Also transitions out of long S0 runs into nonzero runs.
    for (size_t k = 0; k < runs.size(); ++k) {
      const Run& cur = runs[k];
      if (!(cur.label == 0 && cur.len >= zeroWindow)) continue;
      const Run& nxt = runs[(k + 1) % runs.size()];
      if (nxt.label == 0) continue;
      double sw = sAt(cur.i0 + cur.len - 1);
      BoundaryClass clsAfter =
          nxt.label > 0 ? BoundaryClass::SPlus : BoundaryClass::SMinus;
      arcStarts.push_back({sw, clsAfter});
    }

    std::sort(arcStarts.begin(), arcStarts.end());
    require((int)arcStarts.size() <= maxSwitchPoints, ErrorCode::ResolutionError,
            "F_M not finite at resolution: boundary " + std::to_string(b) +
                " has more than " + std::to_string(maxSwitchPoints) +
                " switch points");
    for (size_t k = 0; k < arcStarts.size(); ++k) {
      ClassifiedArc a;
      a.boundary = b;
      a.s0 = arcStarts[k].first;
      a.s1 = arcStarts[(k + 1) % arcStarts.size()].first;
      a.cls = arcStarts[k].second;
      out.arcs.push_back(a);
      out.switchPoints.push_back({b, arcStarts[k].first});
    }
  }
  return out;
}

}  // namespace lensrig
