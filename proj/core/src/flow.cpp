#include "lensrig/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "lensrig/io_util.hpp"
#include "lensrig/parallel.hpp"

namespace lensrig {

const char* eventKindName(EventKind k) {
  switch (k) {
    case EventKind::Entry: return "entry";
    case EventKind::Exit: return "exit";
    case EventKind::Graze: return "graze";
    case EventKind::SwitchTangent: return "switch-tangent";
    case EventKind::GluingJump: return "gluing-jump";
    case EventKind::Seam: return "seam";
  }
  return "?";
}

namespace {

// Dormand-Prince 5(4) tableau with Hairer's quartic dense-output weights.
constexpr double A21 = 1.0 / 5;
constexpr double A31 = 3.0 / 40, A32 = 9.0 / 40;
constexpr double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9;
constexpr double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187,
                 A53 = 64448.0 / 6561, A54 = -212.0 / 729;
constexpr double A61 = 9017.0 / 3168, A62 = -355.0 / 33,
                 A63 = 46732.0 / 5247, A64 = 49.0 / 176,
                 A65 = -5103.0 / 18656;
constexpr double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192,
                 B5 = -2187.0 / 6784, B6 = 11.0 / 84;
constexpr double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920,
                 E5 = -17253.0 / 339200, E6 = 22.0 / 525, E7 = -1.0 / 40;
constexpr double D1 = -12715105075.0 / 11282082432.0;
constexpr double D3 = 87487479700.0 / 32700410799.0;
constexpr double D4 = -10690763975.0 / 1880347072.0;
constexpr double D5 = 701980252875.0 / 199316789632.0;
constexpr double D6 = -1453857185.0 / 822651844.0;
constexpr double D7 = 69997945.0 / 29380423.0;

constexpr int kDim = 6;  // u, v, du, dv, j, j'
constexpr double kContactRearm = 1e-8;
constexpr double kContactSlack = 1e-7;
constexpr double kGrazeProx = 1e-10;

struct Rhs {
  const Scene* scene;
  bool withJacobi = false;
  Side curvatureSide = Side::Below;

  void operator()(const double y[kDim], double dy[kDim]) const {
    ChartPoint p{y[0], y[1]};
    Christoffel G = christoffel(scene->metric(), p);
    double a = y[2], b = y[3];
    dy[0] = a;
    dy[1] = b;
    dy[2] = -(G.G[0][0][0] * a * a + 2 * G.G[0][0][1] * a * b +
              G.G[0][1][1] * b * b);
    dy[3] = -(G.G[1][0][0] * a * a + 2 * G.G[1][0][1] * a * b +
              G.G[1][1][1] * b * b);
    if (withJacobi) {
      double K = gaussCurvature(scene->metric(), p, curvatureSide);
      dy[4] = y[5];
      dy[5] = -K * y[4];
    } else {
      dy[4] = dy[5] = 0.0;
    }
  }
};

struct StepResult {
  double hUsed = 0.0;
  double hNext = 0.0;
  bool accepted = false;
  double y1[kDim];
  DenseBlock dense;
};

class Dopri5 {
 public:
  Dopri5(const Rhs& rhs, double rtol, double atol)
      : rhs_(rhs), rtol_(rtol), atol_(atol) {}

  // One attempted step from (t, y) with size h; fills k1 on first use (FSAL).
  StepResult step(double t, const double y[kDim], double h) {
    (void)t;
    StepResult r;
    double k2[kDim], k3[kDim], k4[kDim], k5[kDim], k6[kDim], k7[kDim];
    double w[kDim];
    if (!haveK1_) {
      rhs_(y, k1_);
      haveK1_ = true;
    }
    for (int i = 0; i < kDim; ++i) w[i] = y[i] + h * A21 * k1_[i];
    rhs_(w, k2);
    for (int i = 0; i < kDim; ++i)
      w[i] = y[i] + h * (A31 * k1_[i] + A32 * k2[i]);
    rhs_(w, k3);
    for (int i = 0; i < kDim; ++i)
      w[i] = y[i] + h * (A41 * k1_[i] + A42 * k2[i] + A43 * k3[i]);
    rhs_(w, k4);
    for (int i = 0; i < kDim; ++i)
      w[i] = y[i] + h * (A51 * k1_[i] + A52 * k2[i] + A53 * k3[i] +
                         A54 * k4[i]);
    rhs_(w, k5);
    for (int i = 0; i < kDim; ++i)
      w[i] = y[i] + h * (A61 * k1_[i] + A62 * k2[i] + A63 * k3[i] +
                         A64 * k4[i] + A65 * k5[i]);
    rhs_(w, k6);
    for (int i = 0; i < kDim; ++i)
      r.y1[i] = y[i] + h * (B1 * k1_[i] + B3 * k3[i] + B4 * k4[i] +
                            B5 * k5[i] + B6 * k6[i]);
    rhs_(r.y1, k7);

    double errNorm = 0.0;
    for (int i = 0; i < kDim; ++i) {
      double e = h * (E1 * k1_[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] +
                      E6 * k6[i] + E7 * k7[i]);
      double sc = atol_ + rtol_ * std::max(std::abs(y[i]), std::abs(r.y1[i]));
      errNorm += (e / sc) * (e / sc);
    }
    errNorm = std::sqrt(errNorm / kDim);

    double fac = 0.9 * std::pow(std::max(errNorm, 1e-30), -0.2);
    fac = std::clamp(fac, 0.2, 5.0);
    r.hUsed = h;
    r.hNext = h * fac;
    r.accepted = errNorm <= 1.0;
    if (r.accepted) {
      r.dense.h = h;
      for (int i = 0; i < kDim; ++i) {
        double ydiff = r.y1[i] - y[i];
        double bspl = h * k1_[i] - ydiff;
        r.dense.rcont[0][i] = y[i];
        r.dense.rcont[1][i] = ydiff;
        r.dense.rcont[2][i] = bspl;
        r.dense.rcont[3][i] = ydiff - h * k7[i] - bspl;
        r.dense.rcont[4][i] = h * (D1 * k1_[i] + D3 * k3[i] + D4 * k4[i] +
                                   D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
      }
      std::memcpy(k1_, k7, sizeof(k1_));  // FSAL
    }
    return r;
  }

  void invalidateK1() { haveK1_ = false; }

 private:
  Rhs rhs_;
  double rtol_, atol_;
  double k1_[kDim];
  bool haveK1_ = false;
};

void denseEval(const DenseBlock& blk, double t, double out[kDim]) {
  double sg = blk.h != 0.0 ? (t - blk.t0) / blk.h : 0.0;
  double s1 = 1.0 - sg;
  for (int i = 0; i < kDim; ++i) {
    out[i] = blk.rcont[0][i] +
             sg * (blk.rcont[1][i] +
                   s1 * (blk.rcont[2][i] +
                         sg * (blk.rcont[3][i] + s1 * blk.rcont[4][i])));
  }
}

struct TraceInit {
  double y0[kDim];
  bool onBoundary = false;
  BoundaryHit entry;
  TangentVec startVec;
};

class Tracer {
 public:
  Tracer(const Scene& scene, const IntegratorCfg& cfg, bool withJacobi)
      : scene_(scene), cfg_(cfg), withJacobi_(withJacobi) {
    require(scene.classification != nullptr, ErrorCode::ValidationError,
            "scene '" + scene.name +
                "' has no precomputed classification; call finalizeScene");
    rhs_.scene = &scene_;
    rhs_.withJacobi = withJacobi;
    nb_ = (int)scene_.boundaries.size();
    if (scene_.metric().family == MetricFamily::SurfaceOfRevolution)
      kinks_ = scene_.metric().prof.kinks;
  }

  GeodesicRecord run(const TraceInit& init);
  JacobiRecord lastJacobi;

 private:
  double boundaryOffset(int b, const double y[kDim]) const {
    return scene_.boundaries[b]->signedOffset({y[0], y[1]});
  }
  double seamOffset(int k, const double y[kDim]) const {
    return y[0] - kinks_[k];
  }

  const Scene& scene_;
  const IntegratorCfg& cfg_;
  bool withJacobi_;
  Rhs rhs_;
  int nb_ = 0;
  std::vector<double> kinks_;
};

struct EventCandidate {
  enum What { BoundaryCross, SeamCross } what;
  int index = -1;
  double t = 0.0;
};

GeodesicRecord Tracer::run(const TraceInit& init) {
  GeodesicRecord rec;
  rec.startedOnBoundary = init.onBoundary;
  rec.entry = init.entry;
  rec.startTangent = init.startVec;

  const double maxLen = cfg_.maxLengthFor(scene_);
  const double diam = scene_.diameterEstimate();
  const double hMax = 0.1 * std::max(1.0, diam);
  const bool revolution =
      scene_.metric().family == MetricFamily::SurfaceOfRevolution;

  double y[kDim];
  std::memcpy(y, init.y0, sizeof(y));
  double t = 0.0;

  if (revolution) {
    double f = scene_.metric().prof.f(y[0]);
    rec.clairaut = f * f * y[3];
  }
  double clairautBase = rec.clairaut.value_or(0.0);

  std::vector<bool> inContact(nb_, false);
  std::vector<BoundaryHit> contactHit(nb_);
  std::vector<double> contactT(nb_, 0.0);
  std::vector<bool> inProximity(nb_, false);
  std::vector<bool> seamContact(kinks_.size(), false);
  if (init.onBoundary) {
    inContact[init.entry.boundary] = true;
    contactHit[init.entry.boundary] = init.entry;
    rec.events.push_back({EventKind::Entry, 0.0, init.entry.boundary,
                          init.entry.s, init.entry.theta});
  }
  for (size_t k = 0; k < kinks_.size(); ++k)
    if (std::abs(seamOffset(k, y)) < kContactRearm) seamContact[k] = true;

  auto pushSample = [&](double tt, const double yy[kDim]) {
    if (cfg_.storeSamples)
      rec.samples.push_back({tt, {yy[0], yy[1]}, yy[2], yy[3]});
  };
  auto trackDrift = [&](const double yy[kDim]) {
    double sp = std::sqrt(std::max(
        0.0, metricInner(scene_.metric(), {yy[0], yy[1]}, yy[2], yy[3], yy[2],
                         yy[3])));
    rec.maxSpeedDrift = std::max(rec.maxSpeedDrift, std::abs(sp - 1.0));
    if (revolution) {
      double f = scene_.metric().prof.f(yy[0]);
      double c = f * f * yy[3];
      double ref = std::max(std::abs(clairautBase), 1e-3);
      rec.maxClairautDrift =
          std::max(rec.maxClairautDrift, std::abs(c - clairautBase) / ref);
    }
  };
  auto jacobiSample = [&](double tt, const double yy[kDim]) {
    if (withJacobi_) lastJacobi.jSamples.push_back({tt, yy[4], yy[5]});
  };

  pushSample(0.0, y);
  trackDrift(y);
  lastJacobi = JacobiRecord{};
  jacobiSample(0.0, y);
  // Curvature side only matters when sitting exactly on a profile kink;
  // off-kink the one-sided second derivatives agree.
  if (revolution && !kinks_.empty())
    rhs_.curvatureSide = (y[2] >= 0) ? Side::Above : Side::Below;

  Dopri5 stepper(rhs_, cfg_.rtol, cfg_.atol);
  double h = std::min(hMax, 1e-3 * std::max(1.0, diam));
  long steps = 0;

  // conjugate-point bookkeeping
  double prevJ = 0.0, prevJT = 0.0;
  bool jArmed = false;

  while (true) {
    if (maxLen - t < 1e-12 * std::max(1.0, maxLen)) break;
    require(steps++ < cfg_.maxSteps, ErrorCode::ConvergenceError,
            "trace: step limit exceeded");
    h = std::min(h, hMax);
    h = std::min(h, maxLen - t);
    require(h > 1e-15 * std::max(1.0, t), ErrorCode::ConvergenceError,
            "trace: step underflow at t = " + std::to_string(t) + ", r/u = " +
                std::to_string(y[0]));

    StepResult sr;
    try {
      sr = stepper.step(t, y, h);
    } catch (const Error& e) {
      // a trial stage left the chart (overshot a boundary): shrink and retry
      if (e.code() != ErrorCode::DomainError) throw;
      h *= 0.25;
      stepper.invalidateK1();
      continue;
    }
    if (!sr.accepted) {
      h = sr.hNext;
      stepper.invalidateK1();
      continue;
    }
    sr.dense.t0 = t;
    double t1 = t + sr.hUsed;

    // --- event scan over the accepted step -------------------------------
    constexpr int kScan = 8;
    EventCandidate best;
    bool haveEvent = false;
    double scanState[kScan + 1][kDim];
    for (int q = 0; q <= kScan; ++q)
      denseEval(sr.dense, t + sr.hUsed * q / kScan, scanState[q]);

    auto bisectCross = [&](auto&& offsetFn, double ta, double tb) {
      double lo = ta, hi = tb;
      double tmp[kDim];
      for (int it = 0; it < 80; ++it) {
        double mid = 0.5 * (lo + hi);
        denseEval(sr.dense, mid, tmp);
        if (offsetFn(tmp) >= 0)
          lo = mid;
        else
          hi = mid;
        if (hi - lo < 1e-16 * std::max(1.0, t1)) break;
      }
      return lo;  // last parameter on the inside
    };

    for (int b = 0; b < nb_; ++b) {
      auto off = [&](const double* st) { return boundaryOffset(b, st); };
      if (inContact[b]) {
        double mn = 1e300, mx = -1e300;
        for (int q = 0; q <= kScan; ++q) {
          double o = off(scanState[q]);
          mn = std::min(mn, o);
          mx = std::max(mx, o);
        }
        if (mn < -kContactSlack) {
          // The graze turned out to be a true departure: report the stored
          // touch as the exit.
          rec.exit = contactHit[b];
          rec.length = contactT[b];
          rec.events.push_back({EventKind::Exit, contactT[b], b,
                                contactHit[b].s, contactHit[b].theta});
          rec.endState = {y[0], y[1], y[2], y[3]};
          lastJacobi.length = contactT[b];
          return rec;
        }
        if (mn > kContactRearm) inContact[b] = false;
        continue;
      }
      int firstNeg = -1;
      double minOff = 1e300;
      for (int q = 0; q <= kScan; ++q) {
        double o = off(scanState[q]);
        if (o < 0 && firstNeg < 0 && q > 0) firstNeg = q;
        minOff = std::min(minOff, o);
      }
      // Shallow dips can hide between scan points inside one large step;
      // a sign change of d(offset)/dt flags them for a minimization pass.
      if (firstNeg < 0) {
        const BoundaryCurve& bc = *scene_.boundaries[b];
        auto rate = [&](const double* st) {
          return bc.offsetRate({st[0], st[1]}, st[2], st[3]);
        };
        for (int q = 0; q + 1 <= kScan && firstNeg < 0; ++q) {
          if (!(rate(scanState[q]) < 0 && rate(scanState[q + 1]) > 0))
            continue;
          double lo = t + sr.hUsed * q / kScan;
          double hi = t + sr.hUsed * (q + 1) / kScan;
          double tmp[kDim];
          for (int it = 0; it < 70; ++it) {
            double mid = 0.5 * (lo + hi);
            denseEval(sr.dense, mid, tmp);
            if (rate(tmp) < 0)
              lo = mid;
            else
              hi = mid;
          }
          double tMin = 0.5 * (lo + hi);
          denseEval(sr.dense, tMin, tmp);
          double oMin = off(tmp);
          minOff = std::min(minOff, oMin);
          if (oMin < 0) {
            double tc =
                bisectCross(off, t + sr.hUsed * q / kScan, tMin);
            if (!haveEvent || tc < best.t) {
              best = {EventCandidate::BoundaryCross, b, tc};
              haveEvent = true;
            }
            inProximity[b] = false;
            firstNeg = q;  // mark handled
          }
        }
        if (firstNeg >= 0) continue;
      }
      if (firstNeg >= 0) {
        double ta = t + sr.hUsed * (firstNeg - 1) / kScan;
        double tb = t + sr.hUsed * firstNeg / kScan;
        double tc = bisectCross(off, ta, tb);
        if (!haveEvent || tc < best.t) {
          best = {EventCandidate::BoundaryCross, b, tc};
          haveEvent = true;
        }
        inProximity[b] = false;
      } else if (minOff < kGrazeProx) {
        if (!inProximity[b]) {
          // tangential proximity without crossing: log a graze at the
          // closest scanned point
          int qm = 0;
          double om = 1e300;
          for (int q = 0; q <= kScan; ++q) {
            double o = off(scanState[q]);
            if (o < om) { om = o; qm = q; }
          }
          double tg = t + sr.hUsed * qm / kScan;
          double st[kDim];
          denseEval(sr.dense, tg, st);
          double sg = scene_.boundaries[b]->nearestArclength({st[0], st[1]});
          double L = scene_.boundaries[b]->length();
          bool nearSwitch =
              scene_.classification->nearestSwitchDistance(b, sg, L) <
              1e-3 * L;
          EventKind kind =
              nearSwitch ? EventKind::SwitchTangent : EventKind::Graze;
          rec.events.push_back({kind, tg, b, sg, 0.0});
          if (kind == EventKind::Graze) rec.grazeCount++;
          else rec.switchTangentCount++;
          inProximity[b] = true;
        }
      } else {
        inProximity[b] = false;
      }
    }

    for (size_t k = 0; k < kinks_.size(); ++k) {
      auto off = [&](const double* st) { return seamOffset((int)k, st); };
      double o0 = off(scanState[0]);
      if (seamContact[k]) {
        if (std::abs(o0) > kContactRearm &&
            std::abs(off(scanState[kScan])) > kContactRearm)
          seamContact[k] = false;
        else
          continue;
      }
      int firstFlip = -1;
      for (int q = 1; q <= kScan; ++q) {
        if ((off(scanState[q]) < 0) != (o0 < 0)) { firstFlip = q; break; }
      }
      if (firstFlip > 0) {
        double ta = t + sr.hUsed * (firstFlip - 1) / kScan;
        double tb = t + sr.hUsed * firstFlip / kScan;
        // bisect on the sign of (offset relative to o0's side)
        auto side = [&](const double* st) { return (o0 < 0) ? -off(st) : off(st); };
        double tc = bisectCross(side, ta, tb);
        if (!haveEvent || tc < best.t) {
          best = {EventCandidate::SeamCross, (int)k, tc};
          haveEvent = true;
        }
      }
    }

    // conjugate-point detection on j
    if (withJacobi_) {
      double jEnd = sr.y1[4];
      if (jArmed && !lastJacobi.firstConjugateT &&
          ((prevJ > 0) != (jEnd > 0))) {
        double lo = prevJT, hi = t1, tmp[kDim];
        for (int it = 0; it < 80; ++it) {
          double mid = 0.5 * (lo + hi);
          denseEval(sr.dense, mid, tmp);
          if ((tmp[4] > 0) == (prevJ > 0))
            lo = mid;
          else
            hi = mid;
        }
        lastJacobi.firstConjugateT = 0.5 * (lo + hi);
      }
      if (!jArmed && std::abs(jEnd) > 1e-8) jArmed = true;
      prevJ = jEnd;
      prevJT = t1;
    }

    if (!haveEvent) {
      std::memcpy(y, sr.y1, sizeof(y));
      t = t1;
      h = sr.hNext;
      if (cfg_.storeDense) rec.dense.push_back(sr.dense);
      pushSample(t, y);
      trackDrift(y);
      jacobiSample(t, y);
      continue;
    }

    // --- handle the earliest event ---------------------------------------
    // The stored block keeps the full-step interpolant; stateAt only ever
    // queries it on [t0, event t] because the next block starts there.
    double yev[kDim];
    denseEval(sr.dense, best.t, yev);
    if (cfg_.storeDense) rec.dense.push_back(sr.dense);

    if (best.what == EventCandidate::SeamCross) {
      t = best.t;
      std::memcpy(y, yev, sizeof(y));
      rec.events.push_back({EventKind::Seam, t, -1, kinks_[best.index], 0.0});
      rec.seamCrossings++;
      seamContact[best.index] = true;
      rhs_.curvatureSide = (y[2] >= 0) ? Side::Above : Side::Below;
      stepper = Dopri5(rhs_, cfg_.rtol, cfg_.atol);
      h = std::min(sr.hNext, hMax);
      pushSample(t, y);
      trackDrift(y);
      jacobiSample(t, y);
      continue;
    }

    int b = best.index;
    const BoundaryCurve& curve = *scene_.boundaries[b];
    double sHit = curve.nearestArclength({yev[0], yev[1]});
    TangentVec T = curve.tangent(sHit);
    TangentVec nu = curve.inwardNormal(sHit);
    ChartPoint ph{yev[0], yev[1]};
    double cosv = metricInner(scene_.metric(), ph, yev[2], yev[3], T.du, T.dv);
    double sinvIn = metricInner(scene_.metric(), ph, yev[2], yev[3], nu.du, nu.dv);
    double thetaOut = std::atan2(std::max(-sinvIn, 0.0), cosv);
    double tangAngle = std::min(thetaOut, M_PI - thetaOut);

    if (scene_.isGluedBoundary(b)) {
      double L = curve.length();
      double sNew = scene_.gluing->apply(sHit, L);
      TangentVec T2 = curve.tangent(sNew);
      TangentVec nu2 = curve.inwardNormal(sNew);
      ChartPoint p2 = curve.point(sNew);
      rec.events.push_back(
          {EventKind::GluingJump, best.t, b, sHit, thetaOut});
      rec.gluingJumps++;
      y[0] = p2.u;
      y[1] = p2.v;
      y[2] = cosv * T2.du + (-sinvIn) * nu2.du;
      y[3] = cosv * T2.dv + (-sinvIn) * nu2.dv;
      // Jacobi data rides through the local isometry unchanged.
      y[4] = yev[4];
      y[5] = yev[5];
      t = best.t;
      if (revolution) {
        double f = scene_.metric().prof.f(y[0]);
        clairautBase = f * f * y[3];
      }
      inContact[b] = true;
      contactHit[b] = {b, sNew, thetaOut};
      contactT[b] = t;
      stepper = Dopri5(rhs_, cfg_.rtol, cfg_.atol);
      h = std::min(sr.hNext, hMax);
      pushSample(t, y);
      jacobiSample(t, y);
      continue;
    }

    double L = curve.length();
    bool nearSwitch =
        scene_.classification->nearestSwitchDistance(b, sHit, L) < 1e-3 * L;

    // A true tangency shows up numerically as a crossing at angle
    // ~sqrt(2 * dip * |k_g|), dip being the integrator's position noise, so
    // the classification threshold cannot sit below that floor. Crossings
    // misread as grazes are recovered by the contact machinery above.
    double kgHit = curve.geodesicCurvature(sHit);
    double angleFloor =
        std::min(2e-3, std::sqrt(2e-8 * std::max(std::abs(kgHit), 1e-8)));
    double effTangencyTol = std::max(cfg_.tangencyTol, angleFloor);

    if (tangAngle < effTangencyTol) {
      BoundaryClass cls = scene_.classification->classAt(b, sHit, L);
      EventKind kind = nearSwitch ? EventKind::SwitchTangent : EventKind::Graze;
      rec.events.push_back({kind, best.t, b, sHit, thetaOut});
      if (kind == EventKind::Graze) rec.grazeCount++;
      else rec.switchTangentCount++;
      if (cls != BoundaryClass::SPlus) {
        // grazing concave or geodesic boundary: keep going
        t = best.t;
        std::memcpy(y, yev, sizeof(y));
        inContact[b] = true;
        contactHit[b] = {b, sHit, thetaOut};
        contactT[b] = t;
        stepper.invalidateK1();
        h = std::min(sr.hNext, hMax);
        pushSample(t, y);
        trackDrift(y);
        jacobiSample(t, y);
        continue;
      }
      // tangential at convex boundary: it is leaving
    }

    rec.exit = BoundaryHit{b, sHit, thetaOut};
    rec.length = best.t;
    rec.endState = {yev[0], yev[1], yev[2], yev[3]};
    rec.events.push_back({EventKind::Exit, best.t, b, sHit, thetaOut});
    pushSample(best.t, yev);
    trackDrift(yev);
    jacobiSample(best.t, yev);
    lastJacobi.length = best.t;
    return rec;
  }

  // length cap reached
  rec.trapped = true;
  rec.length = maxLen;
  rec.endState = {y[0], y[1], y[2], y[3]};
  lastJacobi.length = maxLen;
  lastJacobi.trapped = true;
  return rec;
}

TraceInit initFromBoundary(const Scene& scene, const BoundaryStart& start) {
  require(start.boundary >= 0 &&
              start.boundary < (int)scene.boundaries.size(),
          ErrorCode::ValidationError, "trace: boundary index out of range");
  require(start.theta > 0 && start.theta < M_PI, ErrorCode::DomainError,
          "trace: start theta must lie in (0, pi)");
  TraceInit init;
  TangentVec X = liftUnitTangent(scene, start.boundary, start.s, start.theta);
  init.y0[0] = X.base.u;
  init.y0[1] = X.base.v;
  init.y0[2] = X.du;
  init.y0[3] = X.dv;
  init.y0[4] = 0.0;
  init.y0[5] = 1.0;
  init.onBoundary = true;
  init.entry = {start.boundary, start.s, start.theta};
  init.startVec = X;
  return init;
}

TraceInit initFromInterior(const Scene& scene, const TangentVec& start) {
  double n = metricNorm(scene.metric(), start);
  require(std::abs(n - 1.0) < 1e-8, ErrorCode::DomainError,
          "trace: start vector must be unit (|v| deviates by " +
              fmtDouble(n - 1.0) + ")");
  if (!scene.contains(start.base, 1e-9)) {
    std::ostringstream os;
    os << "trace: start point outside the domain at (" << start.base.u << ", "
       << start.base.v << "); offsets:";
    for (auto& bd : scene.boundaries) os << " " << bd->signedOffset(start.base);
    throw Error(ErrorCode::DomainError, os.str());
  }
  TraceInit init;
  init.y0[0] = start.base.u;
  init.y0[1] = start.base.v;
  init.y0[2] = start.du;
  init.y0[3] = start.dv;
  init.y0[4] = 0.0;
  init.y0[5] = 1.0;
  init.onBoundary = false;
  init.startVec = start;
  return init;
}

}  // namespace

std::array<double, 6> GeodesicRecord::stateAt(double t) const {
  require(!dense.empty(), ErrorCode::ValidationError,
          "stateAt: record has no dense output (set cfg.storeDense)");
  size_t lo = 0, hi = dense.size();
  while (hi - lo > 1) {
    size_t mid = (lo + hi) / 2;
    if (dense[mid].t0 <= t)
      lo = mid;
    else
      hi = mid;
  }
  std::array<double, 6> out{};
  denseEval(dense[lo], t, out.data());
  return out;
}

GeodesicRecord trace(const Scene& scene, const BoundaryStart& start,
                     const IntegratorCfg& cfg) {
  Tracer tr(scene, cfg, false);
  return tr.run(initFromBoundary(scene, start));
}

GeodesicRecord trace(const Scene& scene, const TangentVec& start,
                     const IntegratorCfg& cfg) {
  Tracer tr(scene, cfg, false);
  return tr.run(initFromInterior(scene, start));
}

std::vector<double> gridThetaValues(const GridSpec& grid) {
  require(grid.nTheta >= 2 && grid.nS >= 2, ErrorCode::ValidationError,
          "grid sizes must be >= 2");
  require(grid.thetaMargin > 0 && grid.thetaMargin < M_PI_2,
          ErrorCode::ValidationError, "theta margin must lie in (0, pi/2)");
  std::vector<double> th(grid.nTheta);
  for (int k = 0; k < grid.nTheta; ++k)
    th[k] = grid.thetaMargin +
            k * (M_PI - 2 * grid.thetaMargin) / (grid.nTheta - 1);
  return th;
}

std::string summarizeEvents(const std::vector<GeoEvent>& evs) {
  std::string out;
  for (auto& e : evs) {
    if (e.kind == EventKind::Entry || e.kind == EventKind::Exit) continue;
    if (!out.empty()) out += '|';
    out += eventKindName(e.kind);
    out += '@';
    out += fmtDouble(e.t);
  }
  return out;
}

ScatteringTable scatteringMap(const Scene& scene, const GridSpec& grid,
                              const IntegratorCfg& cfg, int threads) {
  ScatteringTable table;
  table.grid = grid;
  table.gridBoundaries =
      grid.boundaries.empty() ? scene.scatteringBoundaries() : grid.boundaries;
  for (int b : table.gridBoundaries)
    require(!scene.isGluedBoundary(b), ErrorCode::ValidationError,
            "scattering grid may not start on a glued boundary");
  std::vector<double> thetas = gridThetaValues(grid);
  size_t total = table.gridBoundaries.size() * grid.nS * grid.nTheta;
  table.samples.resize(total);

  parallelFor(total, [&](size_t idx) {
    int iTheta = idx % grid.nTheta;
    int iS = (idx / grid.nTheta) % grid.nS;
    int bPos = idx / (grid.nTheta * grid.nS);
    int b = table.gridBoundaries[bPos];
    double L = scene.boundaries[b]->length();
    ScatteringSample& out = table.samples[idx];
    out.bIn = b;
    out.s = L * iS / grid.nS;
    out.theta = thetas[iTheta];
    try {
      GeodesicRecord rec = trace(scene, BoundaryStart{b, out.s, out.theta}, cfg);
      out.trapped = rec.trapped;
      out.gluingJumps = rec.gluingJumps;
      out.grazeCount = rec.grazeCount;
      out.switchTangentCount = rec.switchTangentCount;
      out.seamCrossings = rec.seamCrossings;
      out.maxSpeedDrift = rec.maxSpeedDrift;
      out.maxClairautDrift = rec.maxClairautDrift;
      out.eventSummary = summarizeEvents(rec.events);
      if (rec.trapped) {
        out.tau = cfg.maxLengthFor(scene);
        out.ok = false;
      } else {
        out.bOut = rec.exit->boundary;
        out.sOut = rec.exit->s;
        out.thetaOut = rec.exit->theta;
        out.tau = rec.length;
        out.ok = true;
      }
    } catch (const Error& e) {
      out.ok = false;
      out.error = e.what();
    }
  }, threads);
  return table;
}

JacobiRecord jacobiAlong(const Scene& scene, const GeodesicRecord& geo,
                         const IntegratorCfg& cfg) {
  // Length-capped records are re-integrated up to their cap.
  Tracer tr(scene, cfg, true);
  TraceInit init;
  if (geo.startedOnBoundary) {
    init = initFromBoundary(
        scene, {geo.entry.boundary, geo.entry.s, geo.entry.theta});
  } else {
    init = initFromInterior(scene, geo.startTangent);
  }
  tr.run(init);
  return tr.lastJacobi;
}

ConjugateReport certifyNoConjugatePoints(const Scene& scene,
                                         const GridSpec& grid,
                                         const IntegratorCfg& cfg,
                                         int threads) {
  std::vector<int> bs =
      grid.boundaries.empty() ? scene.scatteringBoundaries() : grid.boundaries;
  std::vector<double> thetas = gridThetaValues(grid);
  size_t total = bs.size() * grid.nS * grid.nTheta;

  struct NodeResult {
    bool checked = false;
    bool violated = false;
    ConjugateViolation v;
    double tau = 0.0;
  };
  std::vector<NodeResult> results(total);

  parallelFor(total, [&](size_t idx) {
    int iTheta = idx % grid.nTheta;
    int iS = (idx / grid.nTheta) % grid.nS;
    int bPos = idx / (grid.nTheta * grid.nS);
    int b = bs[bPos];
    double L = scene.boundaries[b]->length();
    double s = L * iS / grid.nS;
    double theta = thetas[iTheta];
    NodeResult& nr = results[idx];
    try {
      Tracer tr(scene, cfg, true);
      GeodesicRecord rec =
          tr.run(initFromBoundary(scene, BoundaryStart{b, s, theta}));
      if (rec.trapped) return;
      nr.checked = true;
      nr.tau = rec.length;
      auto& jr = tr.lastJacobi;
      if (jr.firstConjugateT && *jr.firstConjugateT <= rec.length) {
        nr.violated = true;
        nr.v = {b, s, theta, *jr.firstConjugateT, rec.length};
      }
    } catch (const Error&) {
      // leave unchecked; reported as skipped
    }
  }, threads);

  ConjugateReport rep;
  for (auto& nr : results) {
    if (!nr.checked) {
      rep.skipped++;
      continue;
    }
    rep.checked++;
    rep.maxCheckedLength = std::max(rep.maxCheckedLength, nr.tau);
    if (nr.violated) rep.violations.push_back(nr.v);
  }
  return rep;
}

std::optional<SelfIntersection> findSelfIntersection(
    const Scene& scene, const GeodesicRecord& rec) {
  require(!rec.samples.empty(), ErrorCode::ValidationError,
          "findSelfIntersection: record has no samples");
  // Resample to a uniform polyline when dense data is present.
  std::vector<GeoSample> pts;
  if (!rec.dense.empty()) {
    int n = 2048;
    pts.reserve(n + 1);
    for (int i = 0; i <= n; ++i) {
      double t = rec.length * i / n;
      auto st = rec.stateAt(t);
      pts.push_back({t, {st[0], st[1]}, st[2], st[3]});
    }
  } else {
    pts = rec.samples;
  }

  bool revolution =
      scene.metric().family == MetricFamily::SurfaceOfRevolution;
  double vmin = pts.front().p.v, vmax = vmin;
  for (auto& s : pts) {
    vmin = std::min(vmin, s.p.v);
    vmax = std::max(vmax, s.p.v);
  }
  int wraps = revolution ? (int)std::floor((vmax - vmin) / (2 * M_PI)) + 1 : 0;

  auto segCross = [](double ax, double ay, double bx, double by, double cx,
                     double cy, double dx, double dy, double& tA,
                     double& tB) {
    double rX = bx - ax, rY = by - ay, sX = dx - cx, sY = dy - cy;
    double den = rX * sY - rY * sX;
    if (std::abs(den) < 1e-18) return false;
    double qpX = cx - ax, qpY = cy - ay;
    tA = (qpX * sY - qpY * sX) / den;
    tB = (qpX * rY - qpY * rX) / den;
    return tA > 1e-9 && tA < 1 - 1e-9 && tB > 1e-9 && tB < 1 - 1e-9;
  };

  size_t n = pts.size();
  for (size_t i = 0; i + 1 < n; ++i) {
    for (size_t j = i + 2; j + 1 < n; ++j) {
      for (int k = (j == i + 2 ? 0 : 0); k <= wraps; ++k) {
        double shift = k * 2 * M_PI;
        for (int sgn = (k == 0 ? 0 : -1); sgn <= (k == 0 ? 0 : 1); sgn += 2) {
          double sh = k == 0 ? 0.0 : sgn * shift;
          if (k == 0 && j == i + 1) continue;
          double tA, tB;
          if (segCross(pts[i].p.u, pts[i].p.v, pts[i + 1].p.u, pts[i + 1].p.v,
                       pts[j].p.u, pts[j].p.v + sh, pts[j + 1].p.u,
                       pts[j + 1].p.v + sh, tA, tB)) {
            SelfIntersection si;
            si.t1 = pts[i].t + tA * (pts[i + 1].t - pts[i].t);
            si.t2 = pts[j].t + tB * (pts[j + 1].t - pts[j].t);
            si.where = {pts[i].p.u + tA * (pts[i + 1].p.u - pts[i].p.u),
                        pts[i].p.v + tA * (pts[i + 1].p.v - pts[i].p.v)};
            return si;
          }
          if (k == 0) break;
        }
      }
    }
  }
  return std::nullopt;
}

}  // namespace lensrig
