#pragma once

#include <vector>

#include "hurricast/storm_data.hpp"
#include "hurricast/synthetic.hpp"

namespace testdata {

struct Prepared {
  hurricast::synthetic::SyntheticData data;
  hurricast::storm::CaseSplit split;
};

// Same preparation as the ingest command: 3-hourly, 1-minute winds,
// selection, case building against the cubes and the year split.
inline Prepared prepare(const hurricast::synthetic::SyntheticSpec& spec,
                        const hurricast::storm::FeatureLayout& layout = hurricast::storm::FeatureLayout()) {
  using namespace hurricast;
  Prepared p;
  p.data = synthetic::generate(spec);
  std::vector<storm::StormTrack> prepared;
  for (const auto& t : p.data.tracks) prepared.push_back(storm::to_one_minute_winds(storm::interpolate_to_3h(t)));
  storm::BuildStats stats;
  std::vector<storm::ForecastCase> cases;
  for (const auto& t : storm::select_storms(prepared)) {
    auto built = storm::build_cases(t, &p.data.cubes, stats, layout);
    cases.insert(cases.end(), built.begin(), built.end());
  }
  p.split = storm::split_by_year(std::move(cases));
  return p;
}

inline hurricast::synthetic::SyntheticSpec small_spec(hurricast::synthetic::SignalPlacement placement,
                                                      int storms = 80) {
  hurricast::synthetic::SyntheticSpec s;
  s.storms = storms;
  s.steps = 32;
  s.placement = placement;
  s.seed = 11;
  return s;
}

}  // namespace testdata
