#pragma once

#include <array>
#include <string>

#include "weanwave/common.hpp"

namespace weanwave {

// The eight cardiorespiratory variables, in canonical channel order. Tokens
// are filesystem-safe and appear in series file names and archive sidecars.
enum class VariableId {
  kFOverVt,     // rapid shallow breathing index f/V_T
  kVtOverTi,    // mean inspiratory flow V_T/T_I
  kTTot,        // breath duration T_Tot
  kTiOverTTot,  // duty cycle T_I/T_Tot
  kTi,          // inspiratory time T_I
  kTe,          // expiratory time T_E
  kVt,          // tidal volume V_T
  kRr,          // respiratory rate RR
};

inline constexpr std::array<VariableId, 8> kChannelOrder = {
    VariableId::kFOverVt, VariableId::kVtOverTi, VariableId::kTTot,
    VariableId::kTiOverTTot, VariableId::kTi, VariableId::kTe,
    VariableId::kVt, VariableId::kRr};

inline const char* to_string(VariableId v) {
  switch (v) {
    case VariableId::kFOverVt: return "f_VT";
    case VariableId::kVtOverTi: return "VT_TI";
    case VariableId::kTTot: return "T_Tot";
    case VariableId::kTiOverTTot: return "TI_TTot";
    case VariableId::kTi: return "T_I";
    case VariableId::kTe: return "T_E";
    case VariableId::kVt: return "V_T";
    case VariableId::kRr: return "RR";
  }
  return "?";
}

inline VariableId variable_from_string(const std::string& s) {
  for (VariableId v : kChannelOrder)
    if (s == to_string(v)) return v;
  throw InvalidArgument("unknown variable token '" + s + "'");
}

// Weaning outcome classes. kReintubated is never trained on; it is held out
// as an independent test group.
enum class Outcome { kSuccess = 0, kFailure = 1, kReintubated = 2 };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::kSuccess: return "success";
    case Outcome::kFailure: return "failure";
    case Outcome::kReintubated: return "reintubated";
  }
  return "?";
}

inline Outcome outcome_from_int(int v) {
  if (v < 0 || v > 2) throw InvalidArgument("class label must be 0, 1 or 2");
  return static_cast<Outcome>(v);
}

}  // namespace weanwave
