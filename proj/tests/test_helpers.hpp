#pragma once

#include <cmath>

#include "loadshare/common.hpp"
#include "loadshare/harness.hpp"

namespace testutil {

inline double rel_err(double got, double want) {
  const double denom = std::max({1e-300, std::abs(want)});
  return std::abs(got - want) / denom;
}

/// Default three-compressor station used across the test suites.
inline loadshare::harness::StationSetup default_station() {
  loadshare::harness::StationSetup st;
  st.capacity = 60.0;
  st.plant.tau_loop = 30.0;
  const double scales[3] = {1.0, 0.96, 0.92};
  for (double s : scales) {
    loadshare::thermo::TrueMap m;
    m.scale = s;
    st.plant.maps.push_back(m);
    st.envelopes.push_back(loadshare::thermo::Envelope{});
  }
  return st;
}

inline loadshare::harness::BatchOptions default_batch() {
  loadshare::harness::BatchOptions opts;
  opts.station = default_station();
  return opts;
}

}  // namespace testutil
