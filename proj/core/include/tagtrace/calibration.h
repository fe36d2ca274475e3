// Reference population and traffic mix for the long-run measurement scenario.

#ifndef TAGTRACE_CALIBRATION_H_
#define TAGTRACE_CALIBRATION_H_

#include <cstdint>
#include <vector>

#include "tagtrace/client_sim.h"
#include "tagtrace/ua_vuln.h"

namespace tagtrace {

// Category shares among the distinct User-Agent strings of the reference
// measurement (the empty string is one further distinct value).
inline constexpr uint32_t kReferenceVulnerableStrings = 3106;
inline constexpr uint32_t kReferenceVersionlessStrings = 65;
inline constexpr uint32_t kReferenceNoMatchStrings = 1801;
// Share of clients that send no User-Agent header at all.
inline constexpr double kMissingAgentShare = 0.032;

// One distinct User-Agent per client. Categories are interleaved so every
// prefix of the population holds them in close to the reference proportions.
std::vector<UaPopulationEntry> CalibratedUaPopulation(uint32_t clients,
                                                      uint64_t seed);

// Vulnerability database the calibrated population is built against.
VulnDb CalibratedVulnDb();

// Content-type shares of plaintext responses, normalized to sum to 1.
MimeMix ReferenceMimeMix();

// 300 clients over six hours with the reference population and mix.
ScenarioConfig ReferenceScenario();

}  // namespace tagtrace

#endif  // TAGTRACE_CALIBRATION_H_
