#include "lensrig/lens.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lensrig/parallel.hpp"

namespace lensrig {

namespace {

double circDist(double a, double b, double L) {
  double d = std::fmod(std::abs(a - b), L);
  return std::min(d, L - d);
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(size_t n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

const BoundaryMapEntry& BoundaryIsometry::entryFor(int bM) const {
  for (auto& e : maps)
    if (e.from == bM) return e;
  throw Error(ErrorCode::ValidationError,
              "isometry has no entry for boundary " + std::to_string(bM));
}

BoundaryIsometry BoundaryIsometry::identity(const Scene& M) {
  BoundaryIsometry h;
  for (int b : M.scatteringBoundaries()) h.maps.push_back({b, b, 1.0, 0.0});
  return h;
}

void validateIsometry(const Scene& M, const Scene& N,
                      const BoundaryIsometry& h, double tol) {
  require(!h.maps.empty(), ErrorCode::ValidationError,
          "isometry has no boundary maps");
  for (auto& e : h.maps) {
    require(e.from >= 0 && e.from < (int)M.boundaries.size(),
            ErrorCode::ValidationError, "isometry: 'from' index out of range");
    require(e.to >= 0 && e.to < (int)N.boundaries.size(),
            ErrorCode::ValidationError, "isometry: 'to' index out of range");
    require(e.sigma == 1.0 || e.sigma == -1.0, ErrorCode::ValidationError,
            "isometry: sigma must be +1 or -1");
    double LM = M.boundaries[e.from]->length();
    double LN = N.boundaries[e.to]->length();
    require(std::abs(LM - LN) <= tol * std::max(1.0, LM),
            ErrorCode::ValidationError,
            "isometry: boundary lengths differ beyond tolerance");
  }
}

PhiImage inducedPhi(const Scene& M, const Scene& N, const BoundaryIsometry& h,
                    int boundary, double s, double theta) {
  (void)M;
  require(theta >= 0.0 && theta <= M_PI, ErrorCode::DomainError,
          "inducedPhi: theta must lie in [0, pi]");
  const BoundaryMapEntry& e = h.entryFor(boundary);
  double LN = N.boundaries[e.to]->length();
  double sN = std::fmod(e.sigma * s + e.shift, LN);
  if (sN < 0) sN += LN;
  // h_* flips the oriented tangent when sigma = -1; nu maps to nu.
  double thetaN = e.sigma > 0 ? theta : M_PI - theta;
  return {e.to, sN, thetaN};
}

LensComparison compareScenes(const Scene& M, const Scene& N,
                             const BoundaryIsometry& h, const CompareCfg& cfg) {
  validateIsometry(M, N, h);
  std::vector<int> bs = cfg.grid.boundaries.empty() ? M.scatteringBoundaries()
                                                    : cfg.grid.boundaries;
  std::vector<double> thetas = gridThetaValues(cfg.grid);
  const int nS = cfg.grid.nS, nTheta = cfg.grid.nTheta;
  const size_t total = bs.size() * nS * nTheta;

  LensComparison cmp;
  cmp.scatTol = cfg.scatTol;
  cmp.lensTol = cfg.lensTol > 0
                    ? cfg.lensTol
                    : 1e-4 * std::max(M.diameterEstimate(), N.diameterEstimate());
  cmp.samples.resize(total);

  parallelFor(total, [&](size_t idx) {
    int iTheta = idx % nTheta;
    int iS = (idx / nTheta) % nS;
    int bPos = idx / (nTheta * nS);
    int b = bs[bPos];
    double L = M.boundaries[b]->length();
    CompareSampleRow& row = cmp.samples[idx];
    row.bIn = b;
    row.s = L * iS / nS;
    row.theta = thetas[iTheta];
    try {
      GeodesicRecord recM = trace(M, BoundaryStart{b, row.s, row.theta},
                                  cfg.integ);
      row.glueM = recM.gluingJumps;
      row.seamM = recM.seamCrossings;
      row.tangM = recM.grazeCount + recM.switchTangentCount;
      if (recM.trapped) {
        row.excludeReason = "trapped-M";
        return;
      }
      PhiImage x = inducedPhi(M, N, h, b, row.s, row.theta);
      GeodesicRecord recN =
          trace(N, BoundaryStart{x.boundary, x.s, x.theta}, cfg.integ);
      row.glueN = recN.gluingJumps;
      row.seamN = recN.seamCrossings;
      row.tangN = recN.grazeCount + recN.switchTangentCount;
      if (recN.trapped) {
        row.excludeReason = "trapped-N";
        return;
      }
      const BoundaryHit& exM = *recM.exit;
      const BoundaryHit& exN = *recN.exit;
      PhiImage pred = inducedPhi(M, N, h, exM.boundary, exM.s, exM.theta);
      double LN = N.boundaries[pred.boundary]->length();
      if (exN.boundary != pred.boundary) {
        row.dS = LN;  // sentinel: wrong boundary component
        row.dTheta = M_PI;
        row.scatMatch = false;
      } else {
        row.dS = circDist(exN.s, pred.s, LN);
        row.dTheta = std::abs(exN.theta - pred.theta);
        row.scatMatch = std::max(row.dS, row.dTheta) < cfg.scatTol;
      }
      row.e = recN.length - recM.length;
      row.usable = true;
    } catch (const Error& err) {
      row.excludeReason = err.what();
    }
  }, cfg.threads);

  // --- verdicts ------------------------------------------------------------
  bool allMatch = true, allLens = true;
  for (auto& row : cmp.samples) {
    if (!row.usable) {
      cmp.excludedCount++;
      continue;
    }
    cmp.usableCount++;
    allMatch = allMatch && row.scatMatch;
    cmp.maxResidualS = std::max(cmp.maxResidualS, row.dS);
    cmp.maxResidualTheta = std::max(cmp.maxResidualTheta, row.dTheta);
    if (std::abs(row.e) >= cmp.lensTol) allLens = false;
  }
  cmp.sameScattering = cmp.usableCount > 0 && allMatch;
  cmp.sameLens = cmp.sameScattering && allLens;

  // --- families --------------------------------------------------------------
  // Connected grid components of usable, tangency-free samples whose event
  // signatures (gluing jumps, seam crossings on either side) agree; tangency
  // strata and trapped samples separate families.
  auto included = [&](size_t idx) {
    const CompareSampleRow& r = cmp.samples[idx];
    return r.usable && r.tangM == 0 && r.tangN == 0;
  };
  auto signature = [&](size_t idx) {
    const CompareSampleRow& r = cmp.samples[idx];
    return std::array<int, 4>{r.glueM, r.seamM, r.glueN, r.seamN};
  };
  UnionFind uf(total);
  auto tryUnite = [&](size_t a, size_t bb) {
    if (included(a) && included(bb) && signature(a) == signature(bb))
      uf.unite((int)a, (int)bb);
  };
  for (size_t bPos = 0; bPos < bs.size(); ++bPos) {
    for (int iS = 0; iS < nS; ++iS) {
      for (int iTheta = 0; iTheta < nTheta; ++iTheta) {
        size_t idx = (bPos * nS + iS) * nTheta + iTheta;
        if (iTheta + 1 < nTheta) tryUnite(idx, idx + 1);
        size_t idxS = (bPos * nS + (iS + 1) % nS) * nTheta + iTheta;
        tryUnite(idx, idxS);  // s wraps around the boundary circle
      }
    }
  }
  std::vector<int> rootToFamily(total, -1);
  for (size_t idx = 0; idx < total; ++idx) {
    if (!included(idx)) continue;
    int root = uf.find((int)idx);
    if (rootToFamily[root] < 0) {
      rootToFamily[root] = (int)cmp.families.size();
      FamilyStat fs;
      fs.id = rootToFamily[root];
      fs.eMin = fs.eMax = cmp.samples[idx].e;
      cmp.families.push_back(fs);
    }
    int fam = rootToFamily[root];
    cmp.samples[idx].family = fam;
    FamilyStat& fs = cmp.families[fam];
    const CompareSampleRow& r = cmp.samples[idx];
    fs.size++;
    fs.eMean += r.e;
    fs.eMin = std::min(fs.eMin, r.e);
    fs.eMax = std::max(fs.eMax, r.e);
    fs.touchesCapOrGlue =
        fs.touchesCapOrGlue || r.glueM + r.seamM + r.glueN + r.seamN > 0;
  }
  for (auto& fs : cmp.families) {
    fs.eMean /= std::max(1, fs.size);
    fs.eSpread = fs.eMax - fs.eMin;
  }
  return cmp;
}

double pairExcess(const LensComparison& cmp, int fam1, int fam2,
                  double constancyTol) {
  require(fam1 >= 0 && fam1 < (int)cmp.families.size() && fam2 >= 0 &&
              fam2 < (int)cmp.families.size(),
          ErrorCode::ValidationError, "pairExcess: family id out of range");
  for (int f : {fam1, fam2}) {
    const FamilyStat& fs = cmp.families[f];
    if (fs.eSpread > constancyTol) {
      throw Error(ErrorCode::ConvergenceError,
                  "pairExcess: family " + std::to_string(f) +
                      " is not constant (spread " + std::to_string(fs.eSpread) +
                      " > tol " + std::to_string(constancyTol) + ")");
    }
  }
  return cmp.families[fam1].eMean - cmp.families[fam2].eMean;
}

FirstVariationReport firstVariationCheck(const Scene& scene, int boundary,
                                         bool varyS, double fixedValue, int n,
                                         const IntegratorCfg& cfg) {
  require(n >= 5, ErrorCode::ValidationError,
          "firstVariationCheck: need at least 5 samples");
  double L = scene.boundaries[boundary]->length();
  const double margin = 0.05;
  std::vector<double> x(n), tau(n), sOut(n), thOut(n);
  std::vector<bool> ok(n, false);
  double step = varyS ? L / n : (M_PI - 2 * margin) / (n - 1);
  for (int i = 0; i < n; ++i) {
    x[i] = varyS ? step * i : margin + step * i;
    double s = varyS ? x[i] : fixedValue;
    double th = varyS ? fixedValue : x[i];
    try {
      GeodesicRecord rec = trace(scene, BoundaryStart{boundary, s, th}, cfg);
      if (rec.trapped || rec.grazeCount + rec.switchTangentCount > 0) continue;
      tau[i] = rec.length;
      sOut[i] = rec.exit->s;
      thOut[i] = rec.exit->theta;
      ok[i] = rec.exit->boundary >= 0;
    } catch (const Error&) {
      // leave the sample out; branches split here
    }
  }

  FirstVariationReport rep;
  double LOut = L;  // families exiting on another boundary unwrap with its length
  int i = 0;
  while (i < n) {
    if (!ok[i]) {
      ++i;
      continue;
    }
    int j = i;
    while (j + 1 < n && ok[j + 1]) ++j;
    if (j - i + 1 >= 3) {
      // unwrap sOut inside the branch
      std::vector<double> su(j - i + 1);
      su[0] = sOut[i];
      for (int k = i + 1; k <= j; ++k) {
        double d = std::fmod(sOut[k] - sOut[k - 1], LOut);
        if (d > LOut / 2) d -= LOut;
        if (d < -LOut / 2) d += LOut;
        su[k - i] = su[k - i - 1] + d;
      }
      FirstVariationReport::Branch br;
      br.first = i;
      br.last = j;
      for (int k = i + 1; k < j; ++k) {
        double dtau = (tau[k + 1] - tau[k - 1]) / (2 * step);
        double dsOut = (su[k - i + 1] - su[k - i - 1]) / (2 * step);
        double thIn = varyS ? fixedValue : x[k];
        double dsIn = varyS ? 1.0 : 0.0;
        double model = std::cos(thOut[k]) * dsOut - std::cos(thIn) * dsIn;
        br.maxResidual = std::max(br.maxResidual, std::abs(dtau - model));
      }
      rep.maxResidual = std::max(rep.maxResidual, br.maxResidual);
      rep.branches.push_back(br);
    }
    i = j + 1;
  }
  return rep;
}

TangentLimit tangentLimitExcess(const Scene& M, const Scene& N,
                                const BoundaryIsometry& h, int boundary,
                                double s, int side,
                                const std::vector<double>& thetaSeq,
                                const IntegratorCfg& cfg) {
  require(side == 1 || side == -1, ErrorCode::ValidationError,
          "tangentLimitExcess: side must be +1 or -1");
  require(thetaSeq.size() >= 3, ErrorCode::ValidationError,
          "tangentLimitExcess: need at least 3 angles");
  for (size_t i = 1; i < thetaSeq.size(); ++i)
    require(thetaSeq[i] < thetaSeq[i - 1] && thetaSeq[i] > 0,
            ErrorCode::ValidationError,
            "tangentLimitExcess: theta sequence must decrease to 0");

  TangentLimit out;
  const BoundaryClassification& cls = *M.classification;
  double L = M.boundaries[boundary]->length();
  BoundaryClass c0 = cls.classAt(boundary, s, L);
  bool concave = c0 == BoundaryClass::SMinus;
  if (c0 == BoundaryClass::SZero) {
    // Follow the boundary in the direction of the tangent limit: the ray is
    // convex when it stays on geodesic boundary or dies at a convex arc,
    // concave when the boundary turns strictly concave first.
    std::vector<double> sw;
    for (auto& p : cls.switchPoints)
      if (p.boundary == boundary) sw.push_back(p.s);
    if (!sw.empty()) {
      std::sort(sw.begin(), sw.end());
      double next = -1;
      if (side > 0) {
        for (double w : sw)
          if (w > s + 1e-12) { next = w; break; }
        if (next < 0) next = sw.front();
        concave = cls.classAt(boundary, next + 1e-6 * L, L) ==
                  BoundaryClass::SMinus;
      } else {
        for (auto it = sw.rbegin(); it != sw.rend(); ++it)
          if (*it < s - 1e-12) { next = *it; break; }
        if (next < 0) next = sw.back();
        concave = cls.classAt(boundary, next - 1e-6 * L, L) ==
                  BoundaryClass::SMinus;
      }
    }
  }
  if (concave) {
    out.concaveDirection = true;
    out.value = 0.0;
    return out;
  }

  std::vector<double> es;
  for (double th : thetaSeq) {
    double theta = side > 0 ? th : M_PI - th;
    GeodesicRecord recM = trace(M, BoundaryStart{boundary, s, theta}, cfg);
    require(!recM.trapped, ErrorCode::ConvergenceError,
            "tangentLimitExcess: sequence hits a trapped geodesic in M");
    PhiImage x = inducedPhi(M, N, h, boundary, s, theta);
    GeodesicRecord recN =
        trace(N, BoundaryStart{x.boundary, x.s, x.theta}, cfg);
    require(!recN.trapped, ErrorCode::ConvergenceError,
            "tangentLimitExcess: sequence hits a trapped geodesic in N");
    es.push_back(recN.length - recM.length);
  }

  // Iterated Aitken extrapolation of the tail.
  std::vector<double> cur = es;
  while (cur.size() >= 3) {
    std::vector<double> nxt;
    for (size_t i = 0; i + 2 < cur.size(); ++i) {
      double den = cur[i + 2] - 2 * cur[i + 1] + cur[i];
      if (std::abs(den) < 1e-300)
        nxt.push_back(cur[i + 2]);
      else
        nxt.push_back(cur[i + 2] -
                      (cur[i + 2] - cur[i + 1]) * (cur[i + 2] - cur[i + 1]) /
                          den);
    }
    if (nxt.empty()) break;
    if (nxt.size() < 3) {
      cur = nxt;
      break;
    }
    cur = nxt;
  }
  out.value = cur.back();
  out.tailSpread = cur.size() >= 2 ? std::abs(cur.back() - cur[cur.size() - 2])
                                   : std::abs(es.back() - es[es.size() - 2]);
  double scale = std::max(1.0, std::abs(out.value));
  require(out.tailSpread <= 1e-3 * scale, ErrorCode::ConvergenceError,
          "tangentLimitExcess: sequence not convergent at this resolution "
          "(tail spread " + std::to_string(out.tailSpread) + ")");
  return out;
}

}  // namespace lensrig
