#pragma once

#include <vector>

#include "oracles.hpp"
#include "qhmm/instrument.hpp"

namespace testing_support {

inline std::vector<oracle::PlainOutcome> plain(const qhmm::Instrument& instr) {
  std::vector<oracle::PlainOutcome> out;
  for (const auto& o : instr.outcomes()) out.push_back({o.value, o.kraus});
  return out;
}

inline double max_abs(const Eigen::MatrixXcd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace testing_support
