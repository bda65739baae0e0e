#include "lensrig/scenes.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace lensrig {

namespace {

using nlohmann::json;

// Registry scenes are defined as "v1" JSON specs; loadScene parses these, so
// file-based and built-in scenes go through one code path.
const std::map<std::string, std::string>& sceneSpecs() {
  static const std::map<std::string, std::string>* specs = [] {
    auto* m = new std::map<std::string, std::string>;
    auto put = [&](const std::string& name, json j) {
      j["version"] = "v1";
      j["name"] = name;
      (*m)[name] = j.dump();
    };
    json circle0 = {{"shape", "circle"}, {"center", {0.0, 0.0}},
                    {"radius", 1.0}, {"interior", "inside"}};

    put("flat-disk",
        {{"metric", {{"family", "conformal"}, {"registry", "flat"}}},
         {"boundaries", {circle0}},
         {"diameter_hint", 2.0}});

    put("flat-annulus",
        {{"metric", {{"family", "conformal"}, {"registry", "flat"}}},
         {"boundaries",
          {{{"shape", "circle"}, {"center", {0.0, 0.0}}, {"radius", 2.0},
            {"interior", "inside"}},
           {{"shape", "circle"}, {"center", {0.0, 0.0}}, {"radius", 1.0},
            {"interior", "outside"}}}},
         {"diameter_hint", 6.0}});

    put("peanut",
        {{"metric", {{"family", "conformal"}, {"registry", "flat"}}},
         {"boundaries", {{{"shape", "peanut"}, {"a", 0.4}}}},
         {"diameter_hint", 3.0}});

    put("cylinder",
        {{"metric", {{"family", "revolution"}, {"registry", "cylinder"}}},
         {"boundaries",
          {{{"shape", "r-level"}, {"r", 0.0}, {"domain", "above"}},
           {{"shape", "r-level"}, {"r", 2.0}, {"domain", "below"}}}},
         {"diameter_hint", 7.0}});

    auto cap = [&](const std::string& name, double beta) {
      put(name,
          {{"metric", {{"family", "conformal"}, {"registry", "conformal:sphere"}}},
           {"boundaries",
            {{{"shape", "circle"}, {"center", {0.0, 0.0}},
              {"radius", std::tan(beta / 2)}, {"interior", "inside"}}}},
           {"diameter_hint", 2 * beta}});
    };
    cap("hemisphere-cap", M_PI_2);
    cap("cap-0.4pi", 0.4 * M_PI);
    cap("cap-0.6pi", 0.6 * M_PI);

    put("hyperbolic-annulus",
        {{"metric", {{"family", "revolution"}, {"registry", "hyperbolic"}}},
         {"boundaries",
          {{{"shape", "r-level"}, {"r", 0.5}, {"domain", "above"}},
           {{"shape", "r-level"}, {"r", 1.5}, {"domain", "below"}}}},
         {"diameter_hint", 15.0}});

    put("remark-cone",
        {{"metric", {{"family", "revolution"}, {"registry", "remark-cone"},
                     {"r_max", 3.5}}},
         {"boundaries",
          {{{"shape", "r-level"}, {"r", 0.025}, {"domain", "above"}},
           {{"shape", "r-level"}, {"r", 3.0}, {"domain", "below"}}}},
         {"diameter_hint", 66.0}});

    put("figure2-glued",
        {{"metric", {{"family", "revolution"}, {"registry", "cylinder"}}},
         {"boundaries",
          {{{"shape", "r-level"}, {"r", 0.0}, {"domain", "above"}},
           {{"shape", "r-level"}, {"r", 2.0}, {"domain", "below"}}}},
         {"gluing", {{"boundary", 1}, {"type", "antipodal"}}},
         {"diameter_hint", 7.0}});

    put("figure2-capped",
        {{"metric", {{"family", "revolution"}, {"registry", "capped-cylinder"}}},
         {"boundaries",
          {{{"shape", "r-level"}, {"r", 0.0}, {"domain", "above"}}}},
         {"diameter_hint", 9.0}});

    put("neck-glued",
        {{"metric", {{"family", "revolution"}, {"registry", "neck-cylinder"}}},
         {"boundaries",
          {{{"shape", "r-level"}, {"r", 0.0}, {"domain", "above"}},
           {{"shape", "r-level"}, {"r", 2.0}, {"domain", "below"}}}},
         {"gluing", {{"boundary", 1}, {"type", "antipodal"}}},
         {"diameter_hint", 7.0}});

    put("neck-capped",
        {{"metric", {{"family", "revolution"}, {"registry", "neck-capped"}}},
         {"boundaries",
          {{{"shape", "r-level"}, {"r", 0.0}, {"domain", "above"}}}},
         {"diameter_hint", 9.0}});
    return m;
  }();
  return *specs;
}

const std::map<std::string, std::string>& pairSpecs() {
  static const std::map<std::string, std::string>* specs = [] {
    auto* m = new std::map<std::string, std::string>;
    auto put = [&](const std::string& name, const std::string& M,
                   const std::string& N) {
      json j = {{"version", "v1"},
                {"name", name},
                {"pair",
                 {{"M", M},
                  {"N", N},
                  {"isometry",
                   {{"maps",
                     {{{"from", 0}, {"to", 0}, {"sigma", 1.0},
                       {"shift", 0.0}}}}}}}}};
      (*m)[name] = j.dump();
    };
    // Order matters: M is the glued cylinder, N the capped one, so the excess
    // tau_N - tau_M of cap-entering geodesics is +pi (the intrinsic diameter
    // of the removed hemisphere).
    put("figure2-pair", "figure2-glued", "figure2-capped");
    put("neck-pair", "neck-glued", "neck-capped");
    return m;
  }();
  return *specs;
}

json parseOrThrow(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  require(!j.is_discarded(), ErrorCode::ValidationError,
          "scene file is not valid JSON");
  return j;
}

double numberAt(const json& j, const std::string& key, const std::string& ptr) {
  require(j.contains(key) && j[key].is_number(), ErrorCode::ValidationError,
          ptr + "/" + key + ": expected a number");
  return j[key].get<double>();
}

std::string stringAt(const json& j, const std::string& key,
                     const std::string& ptr) {
  require(j.contains(key) && j[key].is_string(), ErrorCode::ValidationError,
          ptr + "/" + key + ": expected a string");
  return j[key].get<std::string>();
}

Scene buildScene(const json& j) {
  require(j.is_object(), ErrorCode::ValidationError, "/: expected an object");
  require(j.value("version", "v1") == "v1", ErrorCode::ValidationError,
          "/version: unsupported scene format version");
  Scene sc;
  sc.name = j.value("name", "scene");

  require(j.contains("metric") && j["metric"].is_object(),
          ErrorCode::ValidationError, "/metric: expected an object");
  const json& jm = j["metric"];
  std::string reg = stringAt(jm, "registry", "/metric");
  auto metric = std::make_shared<MetricSpec>(metricRegistry(reg));
  std::string family = stringAt(jm, "family", "/metric");
  bool isConf = metric->family == MetricFamily::ConformalPlanar;
  require(family == (isConf ? "conformal" : "revolution"),
          ErrorCode::ValidationError,
          "/metric/family: '" + family + "' does not match registry metric '" +
              reg + "'");
  if (jm.contains("r_min")) metric->prof.rMin = numberAt(jm, "r_min", "/metric");
  if (jm.contains("r_max")) metric->prof.rMax = numberAt(jm, "r_max", "/metric");
  sc.metricPtr = metric;

  require(j.contains("boundaries") && j["boundaries"].is_array() &&
              !j["boundaries"].empty(),
          ErrorCode::ValidationError,
          "/boundaries: expected a non-empty array");
  int bi = 0;
  for (const json& jb : j["boundaries"]) {
    std::string ptr = "/boundaries/" + std::to_string(bi);
    std::string shape = stringAt(jb, "shape", ptr);
    if (shape == "circle") {
      require(isConf, ErrorCode::ValidationError,
              ptr + ": circle boundaries require a conformal metric");
      require(jb.contains("center") && jb["center"].is_array() &&
                  jb["center"].size() == 2,
              ErrorCode::ValidationError, ptr + "/center: expected [x, y]");
      ChartPoint c{jb["center"][0].get<double>(), jb["center"][1].get<double>()};
      double r = numberAt(jb, "radius", ptr);
      require(r > 0, ErrorCode::ValidationError, ptr + "/radius: must be > 0");
      std::string side = stringAt(jb, "interior", ptr);
      require(side == "inside" || side == "outside", ErrorCode::ValidationError,
              ptr + "/interior: expected 'inside' or 'outside'");
      sc.boundaries.push_back(std::make_shared<ChartCircle>(
          sc.metricPtr, c, r, side == "inside"));
    } else if (shape == "r-level") {
      require(!isConf, ErrorCode::ValidationError,
              ptr + ": r-level boundaries require a revolution metric");
      double r = numberAt(jb, "r", ptr);
      std::string side = stringAt(jb, "domain", ptr);
      require(side == "above" || side == "below", ErrorCode::ValidationError,
              ptr + "/domain: expected 'above' or 'below'");
      sc.boundaries.push_back(std::make_shared<RLevelCircle>(
          sc.metricPtr, r, side == "above"));
    } else if (shape == "peanut") {
      require(isConf, ErrorCode::ValidationError,
              ptr + ": peanut boundary requires a conformal metric");
      double a = numberAt(jb, "a", ptr);
      sc.boundaries.push_back(std::make_shared<PolarCurve>(sc.metricPtr, a));
    } else {
      throw Error(ErrorCode::ValidationError,
                  ptr + "/shape: unknown shape '" + shape + "'");
    }
    ++bi;
  }

  if (j.contains("gluing")) {
    const json& jg = j["gluing"];
    require(jg.is_object(), ErrorCode::ValidationError,
            "/gluing: expected an object");
    require(jg.value("type", "antipodal") == "antipodal",
            ErrorCode::ValidationError, "/gluing/type: expected 'antipodal'");
    int b = (int)numberAt(jg, "boundary", "/gluing");
    require(b >= 0 && b < (int)sc.boundaries.size(), ErrorCode::ValidationError,
            "/gluing/boundary: index out of range");
    sc.gluing = AntipodalGluing{b};
  }

  if (j.contains("diameter_hint"))
    sc.diameterHint = numberAt(j, "diameter_hint", "");

  finalizeScene(sc);
  return sc;
}

std::optional<std::string> lookupSceneFile(const std::string& name) {
  namespace fs = std::filesystem;
  if (fs::exists(name) && fs::is_regular_file(name)) return name;
  if (const char* dir = std::getenv("LENSRIG_SCENES")) {
    fs::path p = fs::path(dir) / (name + ".json");
    if (fs::exists(p)) return p.string();
  }
  return std::nullopt;
}

std::string readFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::ValidationError,
          "cannot open scene file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<std::string> sceneRegistryNames() {
  std::vector<std::string> out;
  for (auto& [k, v] : sceneSpecs()) out.push_back(k);
  return out;
}

std::vector<std::string> pairRegistryNames() {
  std::vector<std::string> out;
  for (auto& [k, v] : pairSpecs()) out.push_back(k);
  return out;
}

Scene parseSceneJson(const std::string& jsonText) {
  return buildScene(parseOrThrow(jsonText));
}

std::string canonicalSceneJson(const std::string& jsonText) {
  json j = parseOrThrow(jsonText);
  buildScene(j);  // validate
  return j.dump();
}

std::string sceneSpecJson(const std::string& registryName) {
  auto it = sceneSpecs().find(registryName);
  require(it != sceneSpecs().end(), ErrorCode::ValidationError,
          "unknown registry scene '" + registryName + "'");
  return it->second;
}

Scene loadScene(const std::string& nameOrPath) {
  auto it = sceneSpecs().find(nameOrPath);
  if (it != sceneSpecs().end()) return parseSceneJson(it->second);
  if (auto path = lookupSceneFile(nameOrPath))
    return parseSceneJson(readFile(*path));
  throw Error(ErrorCode::ValidationError,
              "scene '" + nameOrPath +
                  "' is neither a registry name nor a readable file");
}

ScenePair loadPair(const std::string& nameOrPath) {
  std::string text;
  auto it = pairSpecs().find(nameOrPath);
  if (it != pairSpecs().end()) {
    text = it->second;
  } else if (auto path = lookupSceneFile(nameOrPath)) {
    text = readFile(*path);
  } else {
    throw Error(ErrorCode::ValidationError,
                "pair '" + nameOrPath +
                    "' is neither a registry name nor a readable file");
  }
  json j = parseOrThrow(text);
  require(j.contains("pair") && j["pair"].is_object(),
          ErrorCode::ValidationError, "/pair: expected an object");
  const json& jp = j["pair"];
  ScenePair out;
  out.name = j.value("name", nameOrPath);
  auto loadSide = [&](const char* key) {
    require(jp.contains(key), ErrorCode::ValidationError,
            std::string("/pair/") + key + ": missing");
    if (jp[key].is_string()) return loadScene(jp[key].get<std::string>());
    return buildScene(jp[key]);
  };
  out.M = loadSide("M");
  out.N = loadSide("N");
  if (jp.contains("isometry")) {
    const json& ji = jp["isometry"];
    require(ji.contains("maps") && ji["maps"].is_array(),
            ErrorCode::ValidationError, "/pair/isometry/maps: expected array");
    for (const json& jm : ji["maps"]) {
      BoundaryMapEntry e;
      e.from = (int)numberAt(jm, "from", "/pair/isometry/maps");
      e.to = (int)numberAt(jm, "to", "/pair/isometry/maps");
      e.sigma = numberAt(jm, "sigma", "/pair/isometry/maps");
      e.shift = numberAt(jm, "shift", "/pair/isometry/maps");
      require(e.sigma == 1.0 || e.sigma == -1.0, ErrorCode::ValidationError,
              "/pair/isometry/maps: sigma must be +1 or -1");
      out.isometry.maps.push_back(e);
    }
  } else {
    out.isometry = BoundaryIsometry::identity(out.M);
  }
  validateIsometry(out.M, out.N, out.isometry);
  return out;
}

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

namespace {

double mod2pi(double x) { return normalizeAngle2Pi(x); }

// Great-circle scattering on a spherical cap of angular radius beta
// (boundary = colatitude-beta circle, oriented counterclockwise seen from the
// pole, matching the stereographic chart orientation).
ScatterPrediction capOracle(double beta, double s, double theta) {
  double sb = std::sin(beta), cb = std::cos(beta);
  double phi = s / sb;
  double P[3] = {sb * std::cos(phi), sb * std::sin(phi), cb};
  double T[3] = {-std::sin(phi), std::cos(phi), 0.0};
  double NU[3] = {P[1] * T[2] - P[2] * T[1], P[2] * T[0] - P[0] * T[2],
                  P[0] * T[1] - P[1] * T[0]};
  double V[3], W[3], Q[3];
  for (int i = 0; i < 3; ++i)
    V[i] = std::cos(theta) * T[i] + std::sin(theta) * NU[i];
  double A = std::hypot(P[2], V[2]);
  double t0 = std::atan2(V[2], P[2]);
  double dt = std::acos(std::clamp(cb / A, -1.0, 1.0));
  // crossings of z = cos(beta): t0 +- dt (mod 2pi); t = 0 is the entry
  double c1 = mod2pi(t0 + dt), c2 = mod2pi(t0 - dt);
  double tau = (c1 < 1e-9 || std::abs(c1 - 2 * M_PI) < 1e-9) ? c2
             : (c2 < 1e-9 || std::abs(c2 - 2 * M_PI) < 1e-9) ? c1
                                                             : std::min(c1, c2);
  for (int i = 0; i < 3; ++i) {
    Q[i] = P[i] * std::cos(tau) + V[i] * std::sin(tau);
    W[i] = -P[i] * std::sin(tau) + V[i] * std::cos(tau);
  }
  double phiQ = std::atan2(Q[1], Q[0]);
  double TQ[3] = {-std::sin(phiQ), std::cos(phiQ), 0.0};
  double NQ[3] = {Q[1] * TQ[2] - Q[2] * TQ[1], Q[2] * TQ[0] - Q[0] * TQ[2],
                  Q[0] * TQ[1] - Q[1] * TQ[0]};
  double cosOut = W[0] * TQ[0] + W[1] * TQ[1] + W[2] * TQ[2];
  double sinOut = -(W[0] * NQ[0] + W[1] * NQ[1] + W[2] * NQ[2]);
  ScatterPrediction pr;
  pr.bOut = 0;
  pr.sOut = mod2pi(phiQ) * sb;
  pr.thetaOut = std::atan2(std::max(sinOut, 0.0), cosOut);
  pr.tau = tau;
  return pr;
}

// Euclidean ray tracing against the circles of a flat scene. Returns the
// first boundary hit; used for the flat disk and the flat annulus.
ScatterPrediction flatCircleOracle(double Router, bool hasHole, double Rinner,
                                   int b, double s, double theta) {
  // entry frame
  double px, py, tx, ty, nx, ny;
  if (b == 0) {  // outer circle, ccw
    double phi = s / Router;
    px = Router * std::cos(phi);
    py = Router * std::sin(phi);
    tx = -std::sin(phi);
    ty = std::cos(phi);
    nx = -std::cos(phi);
    ny = -std::sin(phi);
  } else {  // inner circle, cw, inward normal points away from origin
    double phi = -s / Rinner;
    px = Rinner * std::cos(phi);
    py = Rinner * std::sin(phi);
    tx = std::sin(phi);
    ty = -std::cos(phi);
    nx = std::cos(phi);
    ny = std::sin(phi);
  }
  double vx = std::cos(theta) * tx + std::sin(theta) * nx;
  double vy = std::cos(theta) * ty + std::sin(theta) * ny;

  auto hitCircle = [&](double R, double& tHit) {
    // |p + t v| = R, earliest t > tiny
    double bq = px * vx + py * vy;
    double cq = px * px + py * py - R * R;
    double disc = bq * bq - cq;
    if (disc < 0) return false;
    double rt = std::sqrt(disc);
    for (double cand : {-bq - rt, -bq + rt}) {
      if (cand > 1e-12) {
        tHit = cand;
        return true;
      }
    }
    return false;
  };

  double tOut = 0, tIn = 0;
  bool hasOut = hitCircle(Router, tOut);
  bool hasIn = hasHole ? hitCircle(Rinner, tIn) : false;
  ScatterPrediction pr;
  double tau;
  int bOut;
  if (hasIn && (!hasOut || tIn < tOut)) {
    tau = tIn;
    bOut = 1;
  } else {
    require(hasOut, ErrorCode::ConvergenceError, "oracle: ray escaped");
    tau = tOut;
    bOut = 0;
  }
  double qx = px + tau * vx, qy = py + tau * vy;
  double phiQ = std::atan2(qy, qx);
  double txq, tyq, nxq, nyq, sOut, R = bOut == 0 ? Router : Rinner;
  if (bOut == 0) {
    txq = -std::sin(phiQ);
    tyq = std::cos(phiQ);
    nxq = -std::cos(phiQ);
    nyq = -std::sin(phiQ);
    sOut = mod2pi(phiQ) * R;
  } else {
    txq = std::sin(phiQ);
    tyq = -std::cos(phiQ);
    nxq = std::cos(phiQ);
    nyq = std::sin(phiQ);
    sOut = mod2pi(-phiQ) * R;
  }
  double cosOut = vx * txq + vy * tyq;
  double sinOut = -(vx * nxq + vy * nyq);
  pr.bOut = bOut;
  pr.sOut = sOut;
  pr.thetaOut = std::atan2(std::max(sinOut, 0.0), cosOut);
  pr.tau = tau;
  return pr;
}

// Shortest path in the flat annulus (outer R, hole radius rho): straight
// segment when unobstructed, else the shorter tangent-arc-tangent route.
double annulusDistance(double rho, ChartPoint P, ChartPoint Q) {
  double px = P.u, py = P.v, qx = Q.u, qy = Q.v;
  double dx = qx - px, dy = qy - py;
  double len = std::hypot(dx, dy);
  // distance from the hole center to segment PQ
  double tproj = len > 0 ? -(px * dx + py * dy) / (len * len) : 0.0;
  tproj = std::clamp(tproj, 0.0, 1.0);
  double cx = px + tproj * dx, cy = py + tproj * dy;
  if (std::hypot(cx, cy) >= rho - 1e-15) return len;
  double d1 = std::hypot(px, py), d2 = std::hypot(qx, qy);
  double t1 = std::sqrt(d1 * d1 - rho * rho), t2 = std::sqrt(d2 * d2 - rho * rho);
  double psi = std::acos(
      std::clamp((px * qx + py * qy) / (d1 * d2), -1.0, 1.0));
  double a1 = std::acos(std::clamp(rho / d1, -1.0, 1.0));
  double a2 = std::acos(std::clamp(rho / d2, -1.0, 1.0));
  double arcNear = psi - a1 - a2;
  double arcFar = (2 * M_PI - psi) - a1 - a2;
  return t1 + t2 + rho * std::min(arcNear, arcFar);
}

}  // namespace

SceneOracles registryTruths(const std::string& name) {
  SceneOracles o;
  o.scene = name;
  if (name == "flat-disk") {
    o.notes = "unit-circle chord geometry: tau = 2 sin(theta), s' = s + 2 theta";
    o.scattering = [](int, double s, double theta) {
      ScatterPrediction pr;
      pr.bOut = 0;
      pr.sOut = std::fmod(s + 2 * theta, 2 * M_PI);
      pr.thetaOut = theta;
      pr.tau = 2 * std::sin(theta);
      return pr;
    };
    return o;
  }
  if (name == "hemisphere-cap" || name == "cap-0.4pi" || name == "cap-0.6pi") {
    double beta = name == "hemisphere-cap" ? M_PI_2
                : name == "cap-0.4pi" ? 0.4 * M_PI : 0.6 * M_PI;
    o.notes = "great circles on the unit sphere";
    o.scattering = [beta](int, double s, double theta) {
      return capOracle(beta, s, theta);
    };
    return o;
  }
  if (name == "cylinder") {
    o.notes = "flat strip unrolling: tau = h / sin(theta)";
    o.scattering = [](int b, double s, double theta) {
      const double h = 2.0;
      ScatterPrediction pr;
      pr.bOut = 1 - b;
      pr.sOut = mod2pi(-s - h * (std::cos(theta) / std::sin(theta)));
      pr.thetaOut = M_PI - theta;
      pr.tau = h / std::sin(theta);
      return pr;
    };
    return o;
  }
  if (name == "figure2-glued" || name == "figure2-capped") {
    bool capped = name == "figure2-capped";
    o.notes = capped
        ? "cylinder climb + half great circle over the cap: tau = 4/sin(theta) + pi"
        : "cylinder climb + antipodal jump: tau = 4/sin(theta)";
    o.scattering = [capped](int, double s, double theta) {
      ScatterPrediction pr;
      pr.bOut = 0;
      double cot = std::cos(theta) / std::sin(theta);
      pr.sOut = mod2pi(s + 4 * cot - M_PI);
      pr.thetaOut = theta;
      pr.tau = 4.0 / std::sin(theta) + (capped ? M_PI : 0.0);
      return pr;
    };
    return o;
  }
  if (name == "flat-annulus") {
    o.notes = "ray tracing against the two circles; tangent-arc-tangent distance";
    o.scattering = [](int b, double s, double theta) {
      return flatCircleOracle(2.0, true, 1.0, b, s, theta);
    };
    o.distance = [](ChartPoint P, ChartPoint Q) {
      return annulusDistance(1.0, P, Q);
    };
    return o;
  }
  if (name == "remark-cone") {
    o.notes = "flat cone of total angle 2*pi/3 for r <= 1/10; geodesics "
              "develop to straight lines";
    o.development = [](ChartPoint p) {
      return ChartPoint{p.u * std::cos(p.v / 3.0), p.u * std::sin(p.v / 3.0)};
    };
    return o;
  }
  if (name == "figure2-pair" || name == "neck-pair") {
    o.notes = "excess pi on every family that reaches the cap / glued circle";
    o.pairExcessCapFamily = M_PI;
    return o;
  }
  throw Error(ErrorCode::NoOracle, "no oracle for '" + name + "'");
}

}  // namespace lensrig
