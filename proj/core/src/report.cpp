#include "lensrig/report.hpp"

#include <sstream>

#include "lensrig/io_util.hpp"

namespace lensrig {

namespace {

std::string jstr(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  out += '"';
  return out;
}

const char* boolStr(bool b) { return b ? "true" : "false"; }

void eventJson(std::ostringstream& os, const GeoEvent& e) {
  os << "{\"kind\":" << jstr(eventKindName(e.kind))
     << ",\"t\":" << fmtDouble(e.t) << ",\"boundary\":" << e.boundary
     << ",\"s\":" << fmtDouble(e.s) << ",\"angle\":" << fmtDouble(e.angle)
     << "}";
}

}  // namespace

std::string scatteringCsv(const ScatteringTable& table) {
  std::string out =
      "b_idx,s,theta,b_out,s_out,theta_out,tau,trapped,events\n";
  for (const auto& r : table.samples) {
    out += csvRow({std::to_string(r.bIn), fmtDouble(r.s), fmtDouble(r.theta),
                   std::to_string(r.bOut), fmtDouble(r.sOut),
                   fmtDouble(r.thetaOut), fmtDouble(r.tau),
                   r.trapped ? "1" : "0", r.eventSummary});
  }
  return out;
}

std::string scatteringJson(const ScatteringTable& table) {
  std::ostringstream os;
  os << "{\"grid\":{\"n_s\":" << table.grid.nS
     << ",\"n_theta\":" << table.grid.nTheta
     << ",\"theta_margin\":" << fmtDouble(table.grid.thetaMargin)
     << "},\"samples\":[";
  bool first = true;
  for (const auto& r : table.samples) {
    if (!first) os << ",";
    first = false;
    os << "{\"b_idx\":" << r.bIn << ",\"s\":" << fmtDouble(r.s)
       << ",\"theta\":" << fmtDouble(r.theta) << ",\"b_out\":" << r.bOut
       << ",\"s_out\":" << fmtDouble(r.sOut)
       << ",\"theta_out\":" << fmtDouble(r.thetaOut)
       << ",\"tau\":" << fmtDouble(r.tau)
       << ",\"trapped\":" << boolStr(r.trapped) << ",\"events\":"
       << jstr(r.eventSummary) << "}";
  }
  os << "]}";
  return os.str();
}

std::string traceCsv(const GeodesicRecord& rec) {
  std::string out = "t,u,v,du,dv\n";
  for (const auto& s : rec.samples)
    out += csvRow({fmtDouble(s.t), fmtDouble(s.p.u), fmtDouble(s.p.v),
                   fmtDouble(s.du), fmtDouble(s.dv)});
  return out;
}

std::string traceJson(const GeodesicRecord& rec) {
  std::ostringstream os;
  os << "{\"length\":" << fmtDouble(rec.length)
     << ",\"trapped\":" << boolStr(rec.trapped);
  if (rec.exit) {
    os << ",\"exit\":{\"boundary\":" << rec.exit->boundary
       << ",\"s\":" << fmtDouble(rec.exit->s)
       << ",\"theta\":" << fmtDouble(rec.exit->theta) << "}";
  }
  if (rec.clairaut)
    os << ",\"clairaut\":" << fmtDouble(*rec.clairaut);
  os << ",\"max_speed_drift\":" << fmtDouble(rec.maxSpeedDrift)
     << ",\"events\":[";
  for (size_t i = 0; i < rec.events.size(); ++i) {
    if (i) os << ",";
    eventJson(os, rec.events[i]);
  }
  os << "],\"samples\":[";
  for (size_t i = 0; i < rec.samples.size(); ++i) {
    if (i) os << ",";
    const auto& s = rec.samples[i];
    os << "[" << fmtDouble(s.t) << "," << fmtDouble(s.p.u) << ","
       << fmtDouble(s.p.v) << "," << fmtDouble(s.du) << ","
       << fmtDouble(s.dv) << "]";
  }
  os << "]}";
  return os.str();
}

std::string comparisonJson(const LensComparison& cmp) {
  std::ostringstream os;
  os << "{\"verdict\":{\"scattering\":" << boolStr(cmp.sameScattering)
     << ",\"lens\":" << boolStr(cmp.sameLens) << "}"
     << ",\"residuals\":{\"max_s\":" << fmtDouble(cmp.maxResidualS)
     << ",\"max_theta\":" << fmtDouble(cmp.maxResidualTheta) << "}"
     << ",\"tolerances\":{\"scat_tol\":" << fmtDouble(cmp.scatTol)
     << ",\"lens_tol\":" << fmtDouble(cmp.lensTol) << "}"
     << ",\"usable\":" << cmp.usableCount
     << ",\"excluded\":" << cmp.excludedCount << ",\"families\":[";
  for (size_t i = 0; i < cmp.families.size(); ++i) {
    if (i) os << ",";
    const auto& f = cmp.families[i];
    os << "{\"id\":" << f.id << ",\"size\":" << f.size
       << ",\"e_mean\":" << fmtDouble(f.eMean)
       << ",\"e_spread\":" << fmtDouble(f.eSpread)
       << ",\"touches_cap_or_glue\":" << boolStr(f.touchesCapOrGlue) << "}";
  }
  os << "]}";
  return os.str();
}

std::string comparisonCsv(const LensComparison& cmp) {
  std::string out =
      "b_idx,s,theta,usable,scat_match,ds,dtheta,e,family,exclude_reason\n";
  for (const auto& r : cmp.samples) {
    out += csvRow({std::to_string(r.bIn), fmtDouble(r.s), fmtDouble(r.theta),
                   r.usable ? "1" : "0", r.scatMatch ? "1" : "0",
                   fmtDouble(r.dS), fmtDouble(r.dTheta), fmtDouble(r.e),
                   std::to_string(r.family), r.excludeReason});
  }
  return out;
}

std::string classificationJson(const Scene& scene) {
  const BoundaryClassification& cls = *scene.classification;
  std::ostringstream os;
  os << "{\"arcs\":[";
  for (size_t i = 0; i < cls.arcs.size(); ++i) {
    if (i) os << ",";
    const auto& a = cls.arcs[i];
    os << "{\"boundary\":" << a.boundary << ",\"s0\":" << fmtDouble(a.s0)
       << ",\"s1\":" << fmtDouble(a.s1)
       << ",\"class\":" << jstr(boundaryClassName(a.cls)) << "}";
  }
  os << "],\"switch_points\":[";
  for (size_t i = 0; i < cls.switchPoints.size(); ++i) {
    if (i) os << ",";
    os << "{\"boundary\":" << cls.switchPoints[i].boundary
       << ",\"s\":" << fmtDouble(cls.switchPoints[i].s) << "}";
  }
  os << "],\"finite_at_resolution\":" << boolStr(cls.finiteAtResolution)
     << "}";
  return os.str();
}

std::string conjugateJson(const ConjugateReport& rep) {
  std::ostringstream os;
  os << "{\"violations\":[";
  for (size_t i = 0; i < rep.violations.size(); ++i) {
    if (i) os << ",";
    const auto& v = rep.violations[i];
    os << "{\"boundary\":" << v.boundary << ",\"s\":" << fmtDouble(v.s)
       << ",\"theta\":" << fmtDouble(v.theta)
       << ",\"conjugate_t\":" << fmtDouble(v.conjugateT)
       << ",\"tau\":" << fmtDouble(v.tau) << "}";
  }
  os << "],\"checked\":" << rep.checked << ",\"skipped\":" << rep.skipped
     << ",\"max_checked_length\":" << fmtDouble(rep.maxCheckedLength) << "}";
  return os.str();
}

std::string shortenJson(const ShortenResult& res) {
  std::ostringstream os;
  os << "{\"length\":" << fmtDouble(res.path.length)
     << ",\"energy\":" << fmtDouble(res.path.energy)
     << ",\"converged\":" << boolStr(res.converged)
     << ",\"winding_preserved\":" << boolStr(res.windingPreserved)
     << ",\"sweeps\":" << res.sweeps << ",\"segments\":[";
  for (size_t i = 0; i < res.path.segments.size(); ++i) {
    if (i) os << ",";
    const auto& s = res.path.segments[i];
    if (s.kind == PathSegment::Interior) {
      os << "{\"kind\":\"interior\",\"length\":" << fmtDouble(s.length)
         << ",\"start\":[" << fmtDouble(s.start.base.u) << ","
         << fmtDouble(s.start.base.v) << "],\"end\":["
         << fmtDouble(s.end.base.u) << "," << fmtDouble(s.end.base.v) << "]}";
    } else {
      os << "{\"kind\":\"boundary-arc\",\"boundary\":" << s.boundary
         << ",\"s0\":" << fmtDouble(s.s0) << ",\"span\":" << fmtDouble(s.span)
         << ",\"length\":" << fmtDouble(s.length) << "}";
    }
  }
  os << "],\"energy_history\":[";
  for (size_t i = 0; i < res.energyHistory.size(); ++i) {
    if (i) os << ",";
    os << fmtDouble(res.energyHistory[i]);
  }
  os << "]}";
  return os.str();
}

std::string errorJson(const Error& e) {
  std::ostringstream os;
  os << "{\"error\":{\"code\":" << jstr(errorCodeName(e.code()))
     << ",\"message\":" << jstr(e.what()) << "}}";
  return os.str();
}

}  // namespace lensrig
