// lensrig: scattering and lens data laboratory for surfaces with boundary.
//
// Subcommands: trace, scatter, compare, conjugates, shorten, classify, truths.
// Machine output goes to --out (default stdout); human-readable summaries go
// to stderr. Exit codes: 0 success, 1 domain/validation error, 2 numerical
// non-convergence, 64 usage.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "lensrig/io_util.hpp"
#include "lensrig/report.hpp"
#include "lensrig/scenes.hpp"

using namespace lensrig;

namespace {

struct CommonOpts {
  std::string out;
  std::string format = "csv";
  int threads = 0;
  IntegratorCfg integ;
};

void addCommon(CLI::App* cmd, CommonOpts& c, bool withFormat = true) {
  cmd->add_option("--out", c.out, "output file (default: stdout)");
  if (withFormat)
    cmd->add_option("--format", c.format, "csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
  cmd->add_option("--threads", c.threads,
                  "parallelism degree (0 = all cores); output is identical "
                  "for any value");
  cmd->add_option("--rtol", c.integ.rtol, "integrator relative tolerance");
  cmd->add_option("--atol", c.integ.atol, "integrator absolute tolerance");
  cmd->add_option("--event-tol", c.integ.eventTol,
                  "event localization tolerance");
  cmd->add_option("--tangency-tol", c.integ.tangencyTol,
                  "tangential-incidence threshold (radians)");
  cmd->add_option("--max-length", c.integ.maxLength,
                  "trapped-geodesic length cap (0 = 100 x scene diameter)");
}

void emit(const CommonOpts& c, const std::string& payload) {
  if (c.out.empty()) {
    std::cout << payload;
    if (!payload.empty() && payload.back() != '\n') std::cout << "\n";
    return;
  }
  std::ofstream f(c.out, std::ios::binary);
  require(f.good(), ErrorCode::ValidationError,
          "cannot open output file '" + c.out + "'");
  f << payload;
}

GridSpec makeGrid(const std::string& gridStr, double margin) {
  GridSpec g;
  g.thetaMargin = margin;
  auto x = gridStr.find('x');
  require(x != std::string::npos, ErrorCode::ValidationError,
          "grid must look like 64x64");
  try {
    g.nS = std::stoi(gridStr.substr(0, x));
    g.nTheta = std::stoi(gridStr.substr(x + 1));
  } catch (...) {
    throw Error(ErrorCode::ValidationError, "grid must look like 64x64");
  }
  return g;
}

std::vector<ChartPoint> readPolylineCsv(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), ErrorCode::ValidationError,
          "cannot open polyline file '" + path + "'");
  std::vector<ChartPoint> pts;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#' || line.substr(0, 2) == "u,") continue;
    auto comma = line.find(',');
    require(comma != std::string::npos, ErrorCode::ValidationError,
            "polyline rows must be 'u,v'");
    pts.push_back({std::stod(line.substr(0, comma)),
                   std::stod(line.substr(comma + 1))});
  }
  require(pts.size() >= 2, ErrorCode::ValidationError,
          "polyline needs at least two points");
  return pts;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scattering/lens data laboratory for surfaces with boundary"};
  app.require_subcommand(1);

  // ---- trace ----
  auto* cTrace = app.add_subcommand("trace", "trace a single geodesic");
  CommonOpts oTrace;
  std::string traceScene, interior;
  int traceB = 0;
  double traceS = 0.0, traceTheta = M_PI_2;
  cTrace->add_option("--scene", traceScene, "scene name or file")->required();
  cTrace->add_option("--boundary", traceB, "entry boundary index");
  cTrace->add_option("--s", traceS, "entry arclength");
  cTrace->add_option("--theta", traceTheta, "entry angle in (0, pi)");
  cTrace->add_option("--interior", interior,
                     "interior start 'u,v,du,dv' (unit tangent) instead of a "
                     "boundary start");
  addCommon(cTrace, oTrace);

  // ---- scatter ----
  auto* cScatter = app.add_subcommand("scatter", "build a scattering table");
  CommonOpts oScatter;
  std::string scatterScene, scatterGrid = "64x64";
  double scatterMargin = 0.05;
  cScatter->add_option("--scene", scatterScene, "scene name or file")
      ->required();
  cScatter->add_option("--grid", scatterGrid, "nS x nTheta, e.g. 64x64");
  cScatter->add_option("--theta-margin", scatterMargin,
                       "distance of theta samples from 0 and pi");
  addCommon(cScatter, oScatter);

  // ---- compare ----
  auto* cCompare = app.add_subcommand(
      "compare", "compare scattering and lens data of two scenes");
  CommonOpts oCompare;
  std::string pairName, sceneM, sceneN, samplesOut, compareGrid = "64x64";
  double compareMargin = 0.05, scatTol = 1e-4, lensTol = 0.0;
  cCompare->add_option("--pair", pairName, "pair name or pair file");
  cCompare->add_option("--sceneM", sceneM,
                       "first scene (alternative to --pair)");
  cCompare->add_option("--sceneN", sceneN, "second scene");
  cCompare->add_option("--grid", compareGrid, "nS x nTheta");
  cCompare->add_option("--theta-margin", compareMargin, "theta margin");
  cCompare->add_option("--scat-tol", scatTol, "scattering residual tolerance");
  cCompare->add_option("--lens-tol", lensTol,
                       "lens tolerance (0 = 1e-4 x scene diameter)");
  cCompare->add_option("--samples-out", samplesOut,
                       "also write per-sample rows as CSV to this file");
  addCommon(cCompare, oCompare, false);

  // ---- conjugates ----
  auto* cConj =
      app.add_subcommand("conjugates", "certify absence of conjugate points");
  CommonOpts oConj;
  std::string conjScene, conjGrid = "32x32";
  double conjMargin = 0.05;
  cConj->add_option("--scene", conjScene, "scene name or file")->required();
  cConj->add_option("--grid", conjGrid, "nS x nTheta");
  cConj->add_option("--theta-margin", conjMargin, "theta margin");
  addCommon(cConj, oConj, false);

  // ---- shorten ----
  auto* cShorten =
      app.add_subcommand("shorten", "curve-shortening descent to a p-geodesic");
  CommonOpts oShorten;
  std::string shortenScene, polyFile, endpoints;
  int randomPts = 0;
  unsigned seed = 1;
  double bFlag = 0.0;
  cShorten->add_option("--scene", shortenScene, "scene name or file")
      ->required();
  cShorten->add_option("--input", polyFile, "polyline CSV (u,v per row)");
  cShorten->add_option("--endpoints", endpoints,
                       "'u0,v0,u1,v1': random interior polyline between these "
                       "points (with --random)");
  cShorten->add_option("--random", randomPts,
                       "number of random intermediate points");
  cShorten->add_option("--seed", seed, "seed for --random");
  cShorten->add_option("--b", bFlag,
                       "uniqueness-radius bound for the partition (0 = auto)");
  addCommon(cShorten, oShorten, false);

  // ---- classify ----
  auto* cClassify =
      app.add_subcommand("classify", "boundary classification report");
  CommonOpts oClassify;
  std::string classifyScene;
  cClassify->add_option("--scene", classifyScene, "scene name or file")
      ->required();
  addCommon(cClassify, oClassify, false);

  // ---- truths ----
  auto* cTruths = app.add_subcommand(
      "truths", "closed-form oracle predictions next to computed values");
  CommonOpts oTruths;
  std::string truthsScene, truthsGrid = "4x4";
  double truthsMargin = 0.3;
  cTruths->add_option("--scene", truthsScene, "scene name")->required();
  cTruths->add_option("--grid", truthsGrid, "nS x nTheta");
  cTruths->add_option("--theta-margin", truthsMargin, "theta margin");
  addCommon(cTruths, oTruths, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 64;
  }

  try {
    if (*cTrace) {
      Scene scene = loadScene(traceScene);
      IntegratorCfg cfg = oTrace.integ;
      cfg.storeSamples = true;
      GeodesicRecord rec;
      if (!interior.empty()) {
        std::istringstream ss(interior);
        double u, v, du, dv;
        char c;
        ss >> u >> c >> v >> c >> du >> c >> dv;
        require(!ss.fail(), ErrorCode::ValidationError,
                "--interior must be 'u,v,du,dv'");
        rec = trace(scene, TangentVec{{u, v}, du, dv}, cfg);
      } else {
        rec = trace(scene, BoundaryStart{traceB, traceS, traceTheta}, cfg);
      }
      emit(oTrace, oTrace.format == "json" ? traceJson(rec) : traceCsv(rec));
      std::cerr << "trace: length " << fmtDouble(rec.length)
                << (rec.trapped ? " (trapped)" : "") << ", "
                << rec.events.size() << " events\n";
      return 0;
    }

    if (*cScatter) {
      Scene scene = loadScene(scatterScene);
      GridSpec grid = makeGrid(scatterGrid, scatterMargin);
      ScatteringTable table =
          scatteringMap(scene, grid, oScatter.integ, oScatter.threads);
      emit(oScatter, oScatter.format == "json" ? scatteringJson(table)
                                               : scatteringCsv(table));
      int trapped = 0;
      for (auto& r : table.samples) trapped += r.trapped;
      std::cerr << "scatter: " << table.samples.size() << " samples, "
                << trapped << " trapped\n";
      return 0;
    }

    if (*cCompare) {
      ScenePair pair;
      if (!pairName.empty()) {
        pair = loadPair(pairName);
      } else {
        require(!sceneM.empty() && !sceneN.empty(), ErrorCode::ValidationError,
                "compare needs --pair or both --sceneM and --sceneN");
        pair.M = loadScene(sceneM);
        pair.N = loadScene(sceneN);
        pair.isometry = BoundaryIsometry::identity(pair.M);
      }
      CompareCfg cfg;
      cfg.grid = makeGrid(compareGrid, compareMargin);
      cfg.integ = oCompare.integ;
      cfg.scatTol = scatTol;
      cfg.lensTol = lensTol;
      cfg.threads = oCompare.threads;
      LensComparison cmp = compareScenes(pair.M, pair.N, pair.isometry, cfg);
      emit(oCompare, comparisonJson(cmp));
      if (!samplesOut.empty()) {
        CommonOpts tmp;
        tmp.out = samplesOut;
        emit(tmp, comparisonCsv(cmp));
      }
      std::cerr << "compare: scattering "
                << (cmp.sameScattering ? "SAME" : "DIFFERENT") << ", lens "
                << (cmp.sameLens ? "SAME" : "DIFFERENT") << ", "
                << cmp.families.size() << " families\n";
      return 0;
    }

    if (*cConj) {
      Scene scene = loadScene(conjScene);
      GridSpec grid = makeGrid(conjGrid, conjMargin);
      ConjugateReport rep =
          certifyNoConjugatePoints(scene, grid, oConj.integ, oConj.threads);
      emit(oConj, conjugateJson(rep));
      std::cerr << "conjugates: " << rep.violations.size()
                << " violations in " << rep.checked << " checked geodesics\n";
      return 0;
    }

    if (*cShorten) {
      Scene scene = loadScene(shortenScene);
      std::vector<ChartPoint> poly;
      if (!polyFile.empty()) {
        poly = readPolylineCsv(polyFile);
      } else {
        require(!endpoints.empty() && randomPts > 0,
                ErrorCode::ValidationError,
                "shorten needs --input, or --endpoints with --random");
        std::istringstream ss(endpoints);
        double u0, v0, u1, v1;
        char c;
        ss >> u0 >> c >> v0 >> c >> u1 >> c >> v1;
        require(!ss.fail(), ErrorCode::ValidationError,
                "--endpoints must be 'u0,v0,u1,v1'");
        std::mt19937 rng(seed);
        std::uniform_real_distribution<double> jitter(-0.2, 0.2);
        poly.push_back({u0, v0});
        for (int i = 1; i <= randomPts; ++i) {
          double f = (double)i / (randomPts + 1);
          ChartPoint p{u0 + f * (u1 - u0) + jitter(rng),
                       v0 + f * (v1 - v0) + jitter(rng)};
          if (scene.contains(p, -1e-9)) poly.push_back(p);
        }
        poly.push_back({u1, v1});
      }
      PGeoCfg pcfg;
      pcfg.integ = oShorten.integ;
      pcfg.b = bFlag;
      ShortenResult res = shorten(scene, poly, pcfg);
      emit(oShorten, shortenJson(res));
      std::cerr << "shorten: length " << fmtDouble(res.path.length) << " in "
                << res.sweeps << " sweeps"
                << (res.converged ? "" : " (not converged)") << "\n";
      return res.converged ? 0 : 2;
    }

    if (*cClassify) {
      Scene scene = loadScene(classifyScene);
      emit(oClassify, classificationJson(scene));
      std::cerr << "classify: " << scene.classification->arcs.size()
                << " arcs, " << scene.classification->switchPoints.size()
                << " switch points\n";
      return 0;
    }

    if (*cTruths) {
      Scene scene = loadScene(truthsScene);
      SceneOracles oracle = registryTruths(truthsScene);
      require(oracle.scattering != nullptr, ErrorCode::NoOracle,
              "scene '" + truthsScene + "' has no scattering oracle");
      GridSpec grid = makeGrid(truthsGrid, truthsMargin);
      std::string out =
          "b_idx,s,theta,tau,oracle_tau,s_out,oracle_s_out,theta_out,"
          "oracle_theta_out\n";
      for (int b : scene.scatteringBoundaries()) {
        double L = scene.boundaries[b]->length();
        for (int i = 0; i < grid.nS; ++i) {
          for (double th : gridThetaValues(grid)) {
            double s = L * i / grid.nS;
            GeodesicRecord rec =
                trace(scene, BoundaryStart{b, s, th}, oTruths.integ);
            ScatterPrediction pr = oracle.scattering(b, s, th);
            out += csvRow({std::to_string(b), fmtDouble(s), fmtDouble(th),
                           fmtDouble(rec.trapped ? -1.0 : rec.length),
                           fmtDouble(pr.tau),
                           fmtDouble(rec.exit ? rec.exit->s : -1.0),
                           fmtDouble(pr.sOut),
                           fmtDouble(rec.exit ? rec.exit->theta : -1.0),
                           fmtDouble(pr.thetaOut)});
          }
        }
      }
      emit(oTruths, out);
      std::cerr << "truths: oracle '" << oracle.notes << "'\n";
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::cout << errorJson(e) << "\n";
    switch (e.code()) {
      case ErrorCode::ConvergenceError:
      case ErrorCode::ResolutionError:
        return 2;
      default:
        return 1;
    }
  }
  return 64;
}
