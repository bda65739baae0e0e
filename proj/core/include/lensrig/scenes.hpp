#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lensrig/lens.hpp"

namespace lensrig {

// Built-in scene library. Single scenes:
//   flat-disk, flat-annulus, peanut, cylinder, hemisphere-cap, cap-0.4pi,
//   cap-0.6pi, hyperbolic-annulus, remark-cone, figure2-glued,
//   figure2-capped, neck-glued, neck-capped
// Pairs (for compare): figure2-pair, neck-pair.
std::vector<std::string> sceneRegistryNames();
std::vector<std::string> pairRegistryNames();

// Accepts a registry name, a filesystem path to a scene JSON file, or a bare
// name resolved against $LENSRIG_SCENES/<name>.json.
Scene loadScene(const std::string& nameOrPath);

struct ScenePair {
  std::string name;
  Scene M, N;
  BoundaryIsometry isometry;
};

ScenePair loadPair(const std::string& nameOrPath);

// Scene JSON (format "v1"): parse and re-serialize. Serialization is
// canonical (sorted keys, shortest round-trip floats), so
// canonicalSceneJson(canonicalSceneJson(x)) == canonicalSceneJson(x).
Scene parseSceneJson(const std::string& jsonText);
std::string canonicalSceneJson(const std::string& jsonText);
std::string sceneSpecJson(const std::string& registryName);

struct ScatterPrediction {
  int bOut = 0;
  double sOut = 0.0, thetaOut = 0.0, tau = 0.0;
  bool defined = true;  // false: the oracle does not cover this start
};

// Closed-form ground truth for built-in scenes, used by the test suites and
// the `truths` subcommand. Functions are null when no formula applies.
struct SceneOracles {
  std::string scene;
  std::string notes;
  // (boundary, s, theta) -> exit prediction
  std::function<ScatterPrediction(int, double, double)> scattering;
  // shortest-path length between interior points (flat-annulus)
  std::function<double(ChartPoint, ChartPoint)> distance;
  // chart -> developed plane (remark-cone, r <= 1/10 region)
  std::function<ChartPoint(ChartPoint)> development;
  // expected excess (pairs): tau_N - tau_M per entering sample
  std::optional<double> pairExcessCapFamily;
};

// Throws Error(NoOracle) when the name has no bound oracle.
SceneOracles registryTruths(const std::string& name);

}  // namespace lensrig
