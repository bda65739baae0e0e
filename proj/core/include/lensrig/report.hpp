#pragma once

#include <string>

#include "lensrig/lens.hpp"
#include "lensrig/pgeo.hpp"

namespace lensrig {

// Deterministic machine output: fixed key order, shortest round-trip floats.
std::string scatteringCsv(const ScatteringTable& table);
std::string scatteringJson(const ScatteringTable& table);
std::string traceCsv(const GeodesicRecord& rec);
std::string traceJson(const GeodesicRecord& rec);
std::string comparisonJson(const LensComparison& cmp);
std::string comparisonCsv(const LensComparison& cmp);
std::string classificationJson(const Scene& scene);
std::string conjugateJson(const ConjugateReport& rep);
std::string shortenJson(const ShortenResult& res);
std::string errorJson(const Error& e);

}  // namespace lensrig
