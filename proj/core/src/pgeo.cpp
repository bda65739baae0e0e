#include "lensrig/pgeo.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace lensrig {

namespace {

double chartDist(ChartPoint a, ChartPoint b) {
  return std::hypot(a.u - b.u, a.v - b.v);
}

// Metric length of a chart segment by 8-point sampling (estimates only).
double segMetricLength(const Scene& scene, ChartPoint a, ChartPoint b) {
  double acc = 0.0;
  int n = 8;
  for (int i = 0; i < n; ++i) {
    double t = (i + 0.5) / n;
    ChartPoint m{a.u + t * (b.u - a.u), a.v + t * (b.v - a.v)};
    TangentVec w{m, (b.u - a.u) / n, (b.v - a.v) / n};
    acc += metricNorm(scene.metric(), w);
  }
  return acc;
}

TangentVec unitVec(const Scene& scene, ChartPoint base, double du, double dv) {
  TangentVec w{base, du, dv};
  double n = metricNorm(scene.metric(), w);
  require(n > 0, ErrorCode::DomainError, "unitVec: zero vector");
  w.du /= n;
  w.dv /= n;
  return w;
}

struct ShotResult {
  bool converged = false;
  bool blocked = false;
  int blockingBoundary = -1;
  TangentVec dir;     // unit start tangent
  double length = 0.0;
  TangentVec endVel;  // unit tangent at arrival
  double miss = 1e300;
  GeodesicRecord rec;
};

double closestApproach(const GeodesicRecord& rec, ChartPoint q,
                       double& tBest) {
  auto dist = [&](double t) {
    auto st = rec.stateAt(t);
    return std::hypot(st[0] - q.u, st[1] - q.v);
  };
  int n = 64;
  double best = 1e300;
  int ib = 0;
  for (int i = 0; i <= n; ++i) {
    double d = dist(rec.length * i / n);
    if (d < best) {
      best = d;
      ib = i;
    }
  }
  double lo = rec.length * std::max(0, ib - 1) / n;
  double hi = rec.length * std::min(n, ib + 1) / n;
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
  double fc = dist(c), fd = dist(d);
  for (int it = 0; it < 90; ++it) {
    if (fc < fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - gr * (hi - lo);
      fc = dist(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + gr * (hi - lo);
      fd = dist(d);
    }
    if (hi - lo < 1e-15 * std::max(1.0, rec.length)) break;
  }
  tBest = 0.5 * (lo + hi);
  return dist(tBest);
}

ShotResult shootTo(const Scene& scene, ChartPoint p, ChartPoint q,
                   const PGeoCfg& cfg) {
  ShotResult best;
  double chartLen = chartDist(p, q);
  double lenEst = segMetricLength(scene, p, q);
  TangentVec e1 = unitVec(scene, p, q.u - p.u, q.v - p.v);
  TangentVec e2 = metricRotate90(scene.metric(), e1);
  // chart-euclidean unit normal of the chord, for the signed miss
  double cn = std::hypot(q.u - p.u, q.v - p.v);
  double nx = -(q.v - p.v) / cn, ny = (q.u - p.u) / cn;

  IntegratorCfg icfg = cfg.integ;
  icfg.storeDense = true;
  icfg.storeSamples = false;
  icfg.maxLength = 2.5 * lenEst + 0.05 * scene.diameterEstimate();

  const double tol = cfg.shootTol * std::max(1.0, chartLen);

  auto evaluate = [&](double psi, double& mu) -> bool {
    TangentVec d{p, std::cos(psi) * e1.du + std::sin(psi) * e2.du,
                 std::cos(psi) * e1.dv + std::sin(psi) * e2.dv};
    d = unitVec(scene, p, d.du, d.dv);
    GeodesicRecord rec;
    try {
      rec = trace(scene, d, icfg);
    } catch (const Error&) {
      mu = 1e300;
      return false;
    }
    double tb = 0.0;
    double dist = closestApproach(rec, q, tb);
    auto st = rec.stateAt(tb);
    mu = (st[0] - q.u) * nx + (st[1] - q.v) * ny;
    if (dist < best.miss) {
      best.miss = dist;
      best.dir = d;
      best.length = tb;
      best.endVel = unitVec(scene, {st[0], st[1]}, st[2], st[3]);
      best.rec = std::move(rec);
      best.blocked = best.rec.exit.has_value() &&
                     tb > best.rec.length * (1.0 - 1e-9) && dist > 10 * tol;
      best.blockingBoundary = best.rec.exit ? best.rec.exit->boundary : -1;
    }
    return true;
  };

  double psi0 = 0.0, mu0;
  if (!evaluate(psi0, mu0)) return best;
  if (best.miss < tol) {
    best.converged = true;
    return best;
  }
  double psi1 = psi0 - mu0 / std::max(best.length, 1e-6);
  psi1 = std::clamp(psi1, -0.9, 0.9);
  if (psi1 == psi0) psi1 = psi0 + 1e-6;
  double mu1;
  if (!evaluate(psi1, mu1)) return best;

  for (int it = 0; it < cfg.shootMaxIter && best.miss >= tol; ++it) {
    double den = mu1 - mu0;
    double psi2;
    if (std::abs(den) < 1e-300)
      psi2 = psi1 + (psi1 - psi0 != 0 ? psi1 - psi0 : 1e-6);
    else
      psi2 = psi1 - mu1 * (psi1 - psi0) / den;
    psi2 = std::clamp(psi2, -1.3, 1.3);
    double mu2;
    if (!evaluate(psi2, mu2)) break;
    psi0 = psi1;
    mu0 = mu1;
    psi1 = psi2;
    mu1 = mu2;
    if (std::abs(psi1 - psi0) < 1e-16) break;
    if (best.blocked && it > 10) break;  // an obstacle owns this pair
  }
  best.converged = best.miss < tol;
  return best;
}

std::vector<ChartPoint> sampleRec(const GeodesicRecord& rec, double len,
                                  int n = 24) {
  std::vector<ChartPoint> pts;
  pts.reserve(n + 1);
  for (int i = 0; i <= n; ++i) {
    auto st = rec.stateAt(len * i / n);
    pts.push_back({st[0], st[1]});
  }
  return pts;
}

PathSegment interiorFromShot(const ShotResult& shot) {
  PathSegment seg;
  seg.kind = PathSegment::Interior;
  seg.start = shot.dir;
  seg.end = shot.endVel;
  seg.length = shot.length;
  seg.pts = sampleRec(shot.rec, shot.length);
  return seg;
}

PathSegment reversedInterior(const ShotResult& shot, const Scene& scene) {
  PathSegment seg;
  seg.kind = PathSegment::Interior;
  seg.start = TangentVec{shot.endVel.base, -shot.endVel.du, -shot.endVel.dv};
  seg.end = TangentVec{shot.dir.base, -shot.dir.du, -shot.dir.dv};
  seg.length = shot.length;
  seg.pts = sampleRec(shot.rec, shot.length);
  std::reverse(seg.pts.begin(), seg.pts.end());
  (void)scene;
  return seg;
}

PathSegment arcSegment(const Scene& scene, int b, double s0, double span) {
  const BoundaryCurve& c = *scene.boundaries[b];
  PathSegment seg;
  seg.kind = PathSegment::BoundaryArc;
  seg.boundary = b;
  seg.s0 = s0;
  seg.span = span;
  seg.length = std::abs(span);
  double sgn = span >= 0 ? 1.0 : -1.0;
  TangentVec t0 = c.tangent(s0), t1 = c.tangent(s0 + span);
  seg.start = TangentVec{c.point(s0), sgn * t0.du, sgn * t0.dv};
  seg.end = TangentVec{c.point(s0 + span), sgn * t1.du, sgn * t1.dv};
  int n = std::max(8, (int)(std::abs(span) / c.length() * 256));
  seg.pts.reserve(n + 1);
  for (int i = 0; i <= n; ++i) seg.pts.push_back(c.point(s0 + span * i / n));
  return seg;
}

PGeodesicPath assemble(std::vector<PathSegment> segs) {
  PGeodesicPath path;
  path.segments = std::move(segs);
  for (auto& s : path.segments) path.length += s.length;
  path.energy = path.length * path.length;
  for (size_t i = 0; i + 1 < path.segments.size(); ++i) {
    const TangentVec& a = path.segments[i].end;
    const TangentVec& b = path.segments[i + 1].start;
    double dot = a.du * b.du + a.dv * b.dv;  // small-defect proxy
    double cross = a.du * b.dv - a.dv * b.du;
    path.angleDefects.push_back(std::abs(std::atan2(cross, dot)));
  }
  return path;
}

// Arc concavity: every point of the arc must be concave or geodesic.
bool arcAdmissible(const Scene& scene, int b, double s0, double span,
                   double tolKg = 1e-8) {
  const BoundaryCurve& c = *scene.boundaries[b];
  int n = 16;
  for (int i = 0; i <= n; ++i)
    if (c.geodesicCurvature(s0 + span * i / n) > tolKg) return false;
  return true;
}

struct TangentLegOut {
  bool ok = false;
  double sStar = 0.0;
  ShotResult shot;
};

// Finds the geodesic from p grazing boundary b near the guessed touch point,
// arriving tangent along arcDir * T. Bisection on the launch angle between a
// ray that hits the boundary and one that passes it; the grazing ray is the
// common limit, so hit/miss stays well defined on both sides.
TangentLegOut solveTangentLeg(const Scene& scene, ChartPoint p, int b,
                              double sGuess, int arcDir, const PGeoCfg& cfg) {
  TangentLegOut out;
  const BoundaryCurve& c = *scene.boundaries[b];
  ChartPoint aimPt = c.point(sGuess);
  if (chartDist(p, aimPt) < 1e-12) return out;
  TangentVec e1 = unitVec(scene, p, aimPt.u - p.u, aimPt.v - p.v);
  TangentVec e2 = metricRotate90(scene.metric(), e1);

  IntegratorCfg icfg = cfg.integ;
  icfg.storeDense = true;
  icfg.maxLength = 3.0 * scene.diameterEstimate();

  struct Probe {
    bool hits = false;
    GeodesicRecord rec;
  };
  auto probe = [&](double psi) -> Probe {
    Probe pr;
    TangentVec d = unitVec(scene, p, std::cos(psi) * e1.du + std::sin(psi) * e2.du,
                           std::cos(psi) * e1.dv + std::sin(psi) * e2.dv);
    try {
      pr.rec = trace(scene, d, icfg);
    } catch (const Error&) {
      pr.hits = true;  // treat failures as the hitting side
      return pr;
    }
    pr.hits = pr.rec.exit && pr.rec.exit->boundary == b;
    return pr;
  };

  // bracket the grazing angle around the aim direction
  double psiHit = 0.0, psiMiss = 0.0;
  bool haveHit = false, haveMiss = false;
  Probe pr0 = probe(0.0);
  (pr0.hits ? haveHit : haveMiss) = true;
  (pr0.hits ? psiHit : psiMiss) = 0.0;
  for (double d = 1e-3; d < 1.0 && !(haveHit && haveMiss); d *= 4) {
    for (double psi : {d, -d}) {
      Probe pr = probe(psi);
      if (pr.hits && !haveHit) {
        haveHit = true;
        psiHit = psi;
      } else if (!pr.hits && !haveMiss) {
        haveMiss = true;
        psiMiss = psi;
      }
      if (haveHit && haveMiss) break;
    }
  }
  if (!(haveHit && haveMiss)) return out;

  Probe missSide;
  for (int it = 0; it < 100; ++it) {
    double mid = 0.5 * (psiHit + psiMiss);
    Probe pr = probe(mid);
    if (pr.hits)
      psiHit = mid;
    else
      psiMiss = mid;
    if (std::abs(psiHit - psiMiss) < 1e-15) break;
  }
  missSide = probe(psiMiss);
  if (missSide.hits) return out;

  // touch parameter: minimize the signed offset along the passing ray
  const GeodesicRecord& rec = missSide.rec;
  auto off = [&](double t) {
    auto st = rec.stateAt(t);
    return c.signedOffset({st[0], st[1]});
  };
  int n = 128;
  double tb = 0.0, best = 1e300;
  for (int i = 0; i <= n; ++i) {
    double o = off(rec.length * i / n);
    if (o < best) {
      best = o;
      tb = rec.length * i / n;
    }
  }
  double lo = std::max(0.0, tb - rec.length / n);
  double hi = std::min(rec.length, tb + rec.length / n);
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = off(x1), f2 = off(x2);
  for (int it = 0; it < 90; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = off(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = off(x2);
    }
    if (hi - lo < 1e-15 * std::max(1.0, rec.length)) break;
  }
  tb = 0.5 * (lo + hi);
  if (off(tb) > 1e-6 * scene.diameterEstimate()) return out;  // no real graze

  auto st = rec.stateAt(tb);
  ChartPoint touch{st[0], st[1]};
  double sStar = c.nearestArclength(touch);
  TangentVec vArr = unitVec(scene, touch, st[2], st[3]);
  TangentVec T = c.tangent(sStar);
  double along = metricInner(scene.metric(), touch, vArr.du, vArr.dv, T.du,
                             T.dv);
  if (along * arcDir < 0) return out;  // other tangent branch

  out.ok = true;
  out.sStar = sStar;
  out.shot.converged = true;
  out.shot.dir = rec.startTangent;
  out.shot.length = tb;
  out.shot.endVel = vArr;
  out.shot.rec = rec;
  out.shot.miss = 0.0;
  return out;
}

// Tangent-point guesses. For chart circles the flat construction is exact in
// the chart, a good warm start in curved conformal metrics too.
std::vector<double> tangentGuesses(const Scene& scene, ChartPoint p, int b,
                                   int arcDir) {
  const BoundaryCurve& base = *scene.boundaries[b];
  if (auto* cc = dynamic_cast<const ChartCircle*>(&base)) {
    double dx = p.u - cc->center().u, dy = p.v - cc->center().v;
    double d = std::hypot(dx, dy);
    if (d > cc->radius() * (1 + 1e-12)) {
      double phiP = std::atan2(dy, dx);
      double alpha = std::acos(std::clamp(cc->radius() / d, -1.0, 1.0));
      // touch at psi = phiP + alpha arrives ccw in psi; the curve tangent
      // direction depends on its orientation
      double psiCcw = phiP + alpha, psiCw = phiP - alpha;
      double sCcw, sCw;
      if (cc->interiorInside()) {
        sCcw = cc->sFromPhi(psiCcw);
        sCw = cc->sFromPhi(psiCw);
        // interior-inside circles are parameterized ccw: arcDir>0 wants an
        // arrival moving with +T = ccw
        return {arcDir > 0 ? sCcw : sCw};
      }
      sCcw = cc->sFromPhi(normalizeAngle2Pi(-psiCcw));
      sCw = cc->sFromPhi(normalizeAngle2Pi(-psiCw));
      // hole circles run clockwise: +T corresponds to decreasing psi
      return {arcDir > 0 ? sCw : sCcw};
    }
    return {base.nearestArclength(p)};
  }
  double sP = base.nearestArclength(p);
  double L = base.length();
  return {sP + arcDir * L / 8, sP + arcDir * L / 4, sP};
}

ChartPoint pointAtLength(const Scene& scene, const PGeodesicPath& path,
                         double ell, const PGeoCfg& cfg) {
  ell = std::clamp(ell, 0.0, path.length);
  for (const auto& seg : path.segments) {
    if (ell <= seg.length + 1e-15) {
      if (seg.kind == PathSegment::BoundaryArc) {
        double sgn = seg.span >= 0 ? 1.0 : -1.0;
        return scene.boundaries[seg.boundary]->point(seg.s0 + sgn * ell);
      }
      if (ell < 1e-14) return seg.start.base;
      if (ell > seg.length - 1e-14) return seg.end.base;
      IntegratorCfg icfg = cfg.integ;
      icfg.maxLength = ell;
      icfg.storeDense = false;
      icfg.storeSamples = false;
      GeodesicRecord rec = trace(scene, seg.start, icfg);
      return {rec.endState[0], rec.endState[1]};
    }
    ell -= seg.length;
  }
  return path.endPoint();
}

}  // namespace

std::vector<ChartPoint> PGeodesicPath::polyline() const {
  std::vector<ChartPoint> out;
  for (const auto& seg : segments) {
    for (size_t i = 0; i < seg.pts.size(); ++i) {
      if (!out.empty() && i == 0) continue;  // joints shared
      out.push_back(seg.pts[i]);
    }
  }
  return out;
}

std::vector<PGeodesicPath> localPGeodesicCandidates(const Scene& scene,
                                                    ChartPoint p, ChartPoint q,
                                                    const PGeoCfg& cfg) {
  std::vector<PGeodesicPath> cands;
  double d0 = chartDist(p, q);
  if (d0 < 1e-13) {
    PathSegment seg;
    seg.kind = PathSegment::Interior;
    seg.start = unitVec(scene, p, 1.0, 0.0);
    seg.end = seg.start;
    seg.length = 0.0;
    seg.pts = {p, q};
    cands.push_back(assemble({seg}));
    return cands;
  }

  // Route A: direct interior geodesic.
  ShotResult direct = shootTo(scene, p, q, cfg);
  if (direct.converged) cands.push_back(assemble({interiorFromShot(direct)}));

  // Route B/C: around each boundary with non-convex arcs.
  const BoundaryClassification& cls = *scene.classification;
  for (int b = 0; b < (int)scene.boundaries.size(); ++b) {
    if (scene.isGluedBoundary(b)) continue;
    bool hasNonConvex = false;
    for (auto& a : cls.arcs)
      if (a.boundary == b && a.cls != BoundaryClass::SPlus) hasNonConvex = true;
    if (!hasNonConvex) continue;
    const BoundaryCurve& curve = *scene.boundaries[b];
    double L = curve.length();
    bool pOn = std::abs(curve.signedOffset(p)) < 1e-9;
    bool qOn = std::abs(curve.signedOffset(q)) < 1e-9;

    for (int arcDir : {+1, -1}) {
      std::vector<PathSegment> segs;
      double s1, s2;
      ShotResult legP, legQ;
      bool okP = true, okQ = true;
      if (pOn) {
        s1 = curve.nearestArclength(p);
      } else {
        okP = false;
        for (double guess : tangentGuesses(scene, p, b, arcDir)) {
          TangentLegOut tl = solveTangentLeg(scene, p, b, guess, arcDir, cfg);
          if (tl.ok) {
            okP = true;
            s1 = tl.sStar;
            legP = std::move(tl.shot);
            break;
          }
        }
      }
      if (!okP) continue;
      if (qOn) {
        s2 = curve.nearestArclength(q);
      } else {
        okQ = false;
        // leg from q arrives against the arc direction; reversed it leaves
        // along +arcDir
        for (double guess : tangentGuesses(scene, q, b, -arcDir)) {
          TangentLegOut tl = solveTangentLeg(scene, q, b, guess, -arcDir, cfg);
          if (tl.ok) {
            okQ = true;
            s2 = tl.sStar;
            legQ = std::move(tl.shot);
            break;
          }
        }
      }
      if (!okQ) continue;

      double span = std::fmod(arcDir * (s2 - s1), L);
      if (span < 0) span += L;  // arc traversed in arcDir from s1
      if (span > L - 1e-12) span = 0.0;
      double signedSpan = arcDir * span;
      if (!arcAdmissible(scene, b, s1, signedSpan)) continue;

      if (!pOn) segs.push_back(interiorFromShot(legP));
      if (span > 1e-14) segs.push_back(arcSegment(scene, b, s1, signedSpan));
      if (!qOn) segs.push_back(reversedInterior(legQ, scene));
      if (segs.empty()) continue;
      cands.push_back(assemble(std::move(segs)));
    }
  }

  std::sort(cands.begin(), cands.end(),
            [](const PGeodesicPath& a, const PGeodesicPath& b) {
              return a.length < b.length;
            });
  // drop duplicates (same length and same midpoint)
  std::vector<PGeodesicPath> uniq;
  for (auto& c : cands) {
    bool dup = false;
    for (auto& u : uniq) {
      if (std::abs(u.length - c.length) < 1e-10 * std::max(1.0, u.length)) {
        auto pa = u.polyline();
        auto pb = c.polyline();
        if (chartDist(pa[pa.size() / 2], pb[pb.size() / 2]) < 1e-7) dup = true;
      }
    }
    if (!dup) uniq.push_back(std::move(c));
  }
  return uniq;
}

PGeodesicPath localPGeodesic(const Scene& scene, ChartPoint p, ChartPoint q,
                             const PGeoCfg& cfg) {
  auto cands = localPGeodesicCandidates(scene, p, q, cfg);
  require(!cands.empty(), ErrorCode::ConvergenceError,
          "localPGeodesic: no route converged between the given points");
  return cands.front();
}

double piecewiseEnergy(const Scene& scene, const PiecewiseKnots& knots,
                       const PGeoCfg& cfg) {
  require(knots.t.size() == knots.x.size() && knots.t.size() >= 2,
          ErrorCode::ValidationError,
          "piecewiseEnergy: need matching t and x with k >= 1");
  require(std::abs(knots.t.front()) < 1e-15 &&
              std::abs(knots.t.back() - 1.0) < 1e-15,
          ErrorCode::ValidationError, "piecewiseEnergy: t must run 0..1");
  double E = 0.0;
  for (size_t i = 0; i + 1 < knots.x.size(); ++i) {
    double dt = knots.t[i + 1] - knots.t[i];
    require(dt > 0, ErrorCode::ValidationError,
            "piecewiseEnergy: partition must be increasing");
    double d = localPGeodesic(scene, knots.x[i], knots.x[i + 1], cfg).length;
    if (cfg.b > 0)
      require(d < cfg.b, ErrorCode::DomainError,
              "piecewiseEnergy: knot pair exceeds the uniqueness radius");
    E += d * d / dt;
  }
  return E;
}

std::vector<double> windingData(const Scene& scene,
                                const std::vector<ChartPoint>& poly) {
  std::vector<ChartPoint> centers;
  bool revolution = scene.metric().family == MetricFamily::SurfaceOfRevolution;
  for (auto& b : scene.boundaries) {
    if (auto* cc = dynamic_cast<const ChartCircle*>(b.get()))
      if (!cc->interiorInside()) centers.push_back(cc->center());
  }
  std::vector<double> out;
  for (auto& c : centers) {
    double acc = 0.0;
    for (size_t i = 0; i + 1 < poly.size(); ++i) {
      double a0 = std::atan2(poly[i].v - c.v, poly[i].u - c.u);
      double a1 = std::atan2(poly[i + 1].v - c.v, poly[i + 1].u - c.u);
      double d = a1 - a0;
      while (d > M_PI) d -= 2 * M_PI;
      while (d < -M_PI) d += 2 * M_PI;
      acc += d;
    }
    out.push_back(acc);
  }
  if (revolution && !poly.empty()) out.push_back(poly.back().v - poly.front().v);
  return out;
}

bool sameHomotopyClass(const std::vector<double>& a,
                       const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (std::abs(a[i] - b[i]) >= M_PI) return false;
  return true;
}

namespace {

std::vector<ChartPoint> resampleChainUniform(
    const Scene& scene, const std::vector<PGeodesicPath>& legs,
    const std::vector<ChartPoint>& knots, int newK, const PGeoCfg& cfg) {
  double total = 0.0;
  for (auto& l : legs) total += l.length;
  std::vector<ChartPoint> out;
  out.push_back(knots.front());
  for (int i = 1; i < newK; ++i) {
    double target = total * i / newK;
    size_t j = 0;
    while (j < legs.size() && target > legs[j].length) {
      target -= legs[j].length;
      ++j;
    }
    if (j >= legs.size()) {
      out.push_back(knots.back());
      continue;
    }
    out.push_back(pointAtLength(scene, legs[j], target, cfg));
  }
  out.push_back(knots.back());
  return out;
}

}  // namespace

ShortenResult shorten(const Scene& scene,
                      const std::vector<ChartPoint>& polyline,
                      const PGeoCfg& cfgIn) {
  require(polyline.size() >= 2, ErrorCode::ValidationError,
          "shorten: polyline needs at least two points");
  PGeoCfg cfg = cfgIn;
  if (cfg.b <= 0) cfg.b = 0.4 * scene.diameterEstimate();

  std::vector<double> wind0 = windingData(scene, polyline);

  // initial metric length -> energy bound -> knot count
  double len0 = 0.0;
  for (size_t i = 0; i + 1 < polyline.size(); ++i)
    len0 += segMetricLength(scene, polyline[i], polyline[i + 1]);
  double E0 = len0 * len0;
  int k = std::clamp((int)std::ceil(E0 / (0.9 * cfg.b * cfg.b)), 4, 512);

  // initial knots: resample the input by accumulated metric length
  std::vector<ChartPoint> x;
  {
    std::vector<double> cum(polyline.size(), 0.0);
    for (size_t i = 1; i < polyline.size(); ++i)
      cum[i] = cum[i - 1] +
               segMetricLength(scene, polyline[i - 1], polyline[i]);
    x.push_back(polyline.front());
    for (int i = 1; i < k; ++i) {
      double target = len0 * i / k;
      size_t j = std::upper_bound(cum.begin(), cum.end(), target) -
                 cum.begin();
      j = std::clamp(j, (size_t)1, polyline.size() - 1);
      double f = (target - cum[j - 1]) / std::max(1e-300, cum[j] - cum[j - 1]);
      x.push_back({polyline[j - 1].u + f * (polyline[j].u - polyline[j - 1].u),
                   polyline[j - 1].v + f * (polyline[j].v - polyline[j - 1].v)});
    }
    x.push_back(polyline.back());
  }

  auto solveLegs = [&](const std::vector<ChartPoint>& kn) {
    std::vector<PGeodesicPath> legs(kn.size() - 1);
    for (size_t i = 0; i + 1 < kn.size(); ++i)
      legs[i] = localPGeodesic(scene, kn[i], kn[i + 1], cfg);
    return legs;
  };
  auto energyOf = [&](const std::vector<PGeodesicPath>& legs,
                      const std::vector<double>& dt) {
    double E = 0.0;
    for (size_t i = 0; i < legs.size(); ++i)
      E += legs[i].length * legs[i].length / dt[i];
    return E;
  };

  ShortenResult out;
  double prevE = 1e300;
  std::vector<PGeodesicPath> legs;
  std::vector<ChartPoint> hist1, hist2;  // knot history for extrapolation

  for (int sweep = 0; sweep < cfg.maxSweeps; ++sweep) {
    out.sweeps = sweep + 1;
    // 1. replace on the uniform partition
    legs = solveLegs(x);
    std::vector<double> dtU(k, 1.0 / k);
    // 2. midpoint re-knot and replace
    std::vector<ChartPoint> mid;
    mid.push_back(x.front());
    for (auto& l : legs)
      mid.push_back(pointAtLength(scene, l, l.length / 2, cfg));
    mid.push_back(x.back());
    std::vector<PGeodesicPath> midLegs = solveLegs(mid);
    // 3. back to the uniform partition (again the midpoints)
    std::vector<ChartPoint> xNew;
    xNew.push_back(x.front());
    for (size_t i = 1; i + 1 < midLegs.size(); ++i)
      xNew.push_back(
          pointAtLength(scene, midLegs[i], midLegs[i].length / 2, cfg));
    xNew.push_back(x.back());
    x = std::move(xNew);
    legs = solveLegs(x);
    double E = energyOf(legs, dtU);

    // Aitken extrapolation of the knot trajectory kills the slow linear
    // mode of midpoint averaging; accepted only when the energy drops.
    if (hist2.size() == x.size()) {
      std::vector<ChartPoint> acc(x.size());
      acc.front() = x.front();
      acc.back() = x.back();
      bool valid = true;
      for (size_t i = 1; i + 1 < x.size() && valid; ++i) {
        auto ext = [](double a0, double a1, double a2) {
          double den = a2 - 2 * a1 + a0;
          if (std::abs(den) < 1e-14 * (std::abs(a2) + 1e-30)) return a2;
          return a2 - (a2 - a1) * (a2 - a1) / den;
        };
        acc[i] = {ext(hist2[i].u, hist1[i].u, x[i].u),
                  ext(hist2[i].v, hist1[i].v, x[i].v)};
        valid = scene.contains(acc[i], -1e-12);
      }
      if (valid) {
        try {
          std::vector<PGeodesicPath> accLegs = solveLegs(acc);
          double accE = energyOf(accLegs, dtU);
          if (accE < E) {
            x = std::move(acc);
            legs = std::move(accLegs);
            E = accE;
            hist1.clear();
            hist2.clear();
          }
        } catch (const Error&) {
          // extrapolated knots had no convergent legs; keep the plain sweep
        }
      }
    }
    hist2 = std::move(hist1);
    hist1 = x;
    out.energyHistory.push_back(E);

    double maxDefect = 0.0;
    for (size_t i = 0; i + 1 < legs.size(); ++i) {
      const TangentVec& a = legs[i].segments.back().end;
      const TangentVec& b2 = legs[i + 1].segments.front().start;
      double dot = a.du * b2.du + a.dv * b2.dv;
      double cross = a.du * b2.dv - a.dv * b2.du;
      maxDefect = std::max(maxDefect, std::abs(std::atan2(cross, dot)));
    }
    for (auto& l : legs)
      for (double d : l.angleDefects) maxDefect = std::max(maxDefect, d);

    bool energyDone = prevE - E < cfg.etol * std::max(1.0, E);
    prevE = E;
    if (energyDone && maxDefect < cfg.joinTol) {
      out.converged = true;
      break;
    }
    // refine the partition when a leg outgrows the uniqueness bound
    double maxLeg = 0.0;
    for (auto& l : legs) maxLeg = std::max(maxLeg, l.length);
    if (maxLeg >= cfg.b && k < 1024) {
      x = resampleChainUniform(scene, legs, x, 2 * k, cfg);
      k *= 2;
      prevE = 1e300;
      hist1.clear();
      hist2.clear();
    }
  }

  // assemble the final path
  std::vector<PathSegment> segs;
  for (auto& l : legs)
    for (auto& s : l.segments) {
      // merge contiguous boundary arcs
      if (!segs.empty() && s.kind == PathSegment::BoundaryArc &&
          segs.back().kind == PathSegment::BoundaryArc &&
          segs.back().boundary == s.boundary &&
          std::abs(std::fmod(segs.back().s0 + segs.back().span - s.s0,
                             scene.boundaries[s.boundary]->length())) < 1e-9) {
        segs.back().span += s.span;
        segs.back().length += s.length;
        segs.back().end = s.end;
        segs.back().pts.insert(segs.back().pts.end(), s.pts.begin() + 1,
                               s.pts.end());
        continue;
      }
      segs.push_back(s);
    }
  out.path = assemble(std::move(segs));
  out.path.converged = out.converged;
  out.path.windingAngles = windingData(scene, out.path.polyline());
  out.windingPreserved = sameHomotopyClass(out.path.windingAngles, wind0);
  out.knots.x = x;
  out.knots.t.resize(x.size());
  for (size_t i = 0; i < x.size(); ++i)
    out.knots.t[i] = (double)i / (x.size() - 1);
  return out;
}

double uniquenessRadius(const Scene& scene, ChartPoint center, double radius,
                        const PGeoCfg& cfg, int probePairs, unsigned seed) {
  require(radius > 0, ErrorCode::ValidationError,
          "uniquenessRadius: radius must be > 0");
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);

  double lam = 1.0;
  if (scene.metric().family == MetricFamily::ConformalPlanar)
    lam = scene.metric().conf.lam(center.u, center.v);
  double chartR = radius / lam;

  auto samplePoint = [&]() -> ChartPoint {
    for (int it = 0; it < 4000; ++it) {
      ChartPoint p{center.u + chartR * uni(rng), center.v + chartR * uni(rng)};
      if (scene.contains(p, -1e-9)) return p;
    }
    throw Error(ErrorCode::ConvergenceError,
                "uniquenessRadius: cannot sample the region");
  };

  // point at metric distance <= rho from p (walk a geodesic, clip at exits)
  auto walk = [&](ChartPoint p, double rho) -> ChartPoint {
    double ang = M_PI * uni(rng);
    TangentVec e1 = unitVec(scene, p, std::cos(ang), std::sin(ang));
    IntegratorCfg icfg = cfg.integ;
    icfg.maxLength = rho;
    GeodesicRecord rec = trace(scene, e1, icfg);
    return {rec.endState[0], rec.endState[1]};
  };

  struct Hole {
    ChartPoint c;
    double rho;
  };
  std::vector<Hole> holes;  // for adversarial point-symmetric pairs
  for (auto& b : scene.boundaries)
    if (auto* cc = dynamic_cast<const ChartCircle*>(b.get()))
      if (!cc->interiorInside()) holes.push_back({cc->center(), cc->radius()});

  auto pairUnique = [&](ChartPoint a, ChartPoint b2, double bhat) -> bool {
    std::vector<PGeodesicPath> cands;
    try {
      cands = localPGeodesicCandidates(scene, a, b2, cfg);
    } catch (const Error&) {
      return false;  // cannot certify
    }
    if (cands.empty()) return false;
    if (cands.front().length > bhat * (1 + 1e-9)) return true;  // out of range
    if (cands.size() < 2) return true;
    double tie = cands[1].length - cands[0].length;
    if (tie > 1e-7 * std::max(1.0, cands[0].length)) return true;
    auto pa = cands[0].polyline();
    auto pb = cands[1].polyline();
    return chartDist(pa[pa.size() / 2], pb[pb.size() / 2]) < 1e-6;
  };

  auto test = [&](double bhat) -> bool {
    std::mt19937 rngLocal(seed ^ 0x9e3779b9u);
    rng = rngLocal;
    for (int i = 0; i < probePairs; ++i) {
      ChartPoint a = samplePoint();
      ChartPoint b2 = walk(a, bhat * (0.2 + 0.8 * std::abs(uni(rng))));
      if (!pairUnique(a, b2, bhat)) return false;
    }
    // Point-symmetric pairs across each hole tie their two routes exactly;
    // a ladder of radii brackets the shortest such tie from above.
    for (auto& hole : holes) {
      for (int i = 0; i < 12; ++i) {
        double rho = hole.rho * (1.02 + 0.1 * i);
        double ang = 2.39996322972865332 * (i + 1);
        ChartPoint a{hole.c.u + rho * std::cos(ang),
                     hole.c.v + rho * std::sin(ang)};
        ChartPoint b2{2 * hole.c.u - a.u, 2 * hole.c.v - a.v};
        if (!scene.contains(a, -1e-9) || !scene.contains(b2, -1e-9)) continue;
        if (!pairUnique(a, b2, bhat)) return false;
      }
    }
    return true;
  };

  double cap = 2 * radius;
  if (test(cap)) return cap;
  double lo = 0.0, hi = cap;
  for (int it = 0; it < 16; ++it) {
    double mid = 0.5 * (lo + hi);
    if (test(mid))
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 0.01 * radius) break;
  }
  return lo;
}

}  // namespace lensrig
