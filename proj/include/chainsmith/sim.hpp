#pragma once

#include <chainsmith/backend.hpp>

#include <functional>
#include <optional>
#include <string>
#include <string_view>

// Deterministic stand-ins for the model roles, used to author scripted tables offline.
// Queries are arithmetic ("What is A + B?") so the simulated generator can be right or wrong
// without seeing the ground truth.
namespace chainsmith::sim {

using backend::Request;
using Responder = std::function<std::string(const Request&)>;

/// Value after "<key>" on the first line starting with it, trimmed.
std::optional<std::string> line_value(std::string_view text, std::string_view key);

bool is_final_request(const Request& r);
/// Step number requested by a reasoning-step prompt, 0 when the prompt is not one.
int requested_step(const Request& r);

/// Reasoning model. Plan (step count, slip, malformed reply) is a hash of question and seed;
/// a slip is more likely at higher temperature and usually, but not always, corrupts the answer.
Responder generator();
/// "yes" when the model answer equals the ground truth, ignoring case and surrounding space.
Responder answer_judge();
/// Scores paths by step count with a small hash jitter; always well-formed.
Responder score_judge();
/// Echoes the answer named in the supplementary summary; errs on a hash-chosen minority.
Responder summary_agent();
/// "yes" when the trace has steps and none of them slipped.
Responder trace_judge();

/// Responder for a pipeline role name, nullptr for an unknown role.
Responder for_role(std::string_view role);

}  // namespace chainsmith::sim
