#pragma once

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "balancing.hpp"
#include "bounds.hpp"
#include "lowrank.hpp"

namespace dtmor {

using json = nlohmann::json;

namespace detail {

/// NaN and infinities become null; JSON has no encoding for them.
inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace detail

/// Scientific notation with 6 significant digits; "nan"/"inf" spelled out.
inline std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.5e", v);
  return buf;
}

/// Every bound evaluated for one reduced model.
struct BoundReport {
  std::string method;  // BT or TLBT
  Horizon tau;         // evaluation window
  Index r = 0;
  double hsv_tail = 0.0;
  std::optional<OutputBound> output;
  std::optional<InfHorizonBound> inf_horizon;
  std::optional<TlbtExpression> tl_expression;
  std::optional<AsymptoticBound> asymptotic;
  std::optional<AsymptoticConstants> constants_full, constants_rom;
  std::optional<CertificateResult> certificate;
  std::vector<std::string> notes;

  bool abs_applied() const {
    return (output && output->abs_applied) || (inf_horizon && inf_horizon->abs_applied) ||
           (tl_expression && tl_expression->abs_applied);
  }
  bool large_scale() const { return output && output->large_scale; }

  json to_json() const {
    using detail::num;
    json j;
    j["method"] = method;
    j["tau"] = tau.str();
    j["r"] = r;
    j["hsv-tail"] = num(hsv_tail);
    j["flags"] = {{"averaged-sides", true},
                  {"absolute-value-applied", abs_applied()},
                  {"large-scale-approximate", large_scale()},
                  {"direct-sum-fallback", output && output->direct_sum},
                  {"sides-disagree", output && output->sides_disagree}};
    if (output)
      j["output-bound"] = {{"epsilon", num(output->epsilon)},
                           {"c-side", num(output->c_side)},
                           {"b-side", num(output->b_side)}};
    else
      j["output-bound"] = nullptr;
    if (inf_horizon)
      j["infinite-horizon"] = {{"value", num(inf_horizon->value)},
                               {"c-side", num(inf_horizon->c_side)},
                               {"b-side", num(inf_horizon->b_side)},
                               {"upper", num(inf_horizon->upper)},
                               {"note", "value is the squared h2 error norm"}};
    else
      j["infinite-horizon"] = nullptr;
    if (tl_expression) {
      json terms = json::object();
      for (const auto& [name, v] : tl_expression->terms) terms[name] = num(v);
      j["tl-error-expression"] = {{"value", num(tl_expression->value)},   {"c-side", num(tl_expression->c_side)},
                                  {"b-side", num(tl_expression->b_side)}, {"r-tau", num(tl_expression->r_tau)},
                                  {"r-tau-c", num(tl_expression->r_tau_c)}, {"r-tau-b", num(tl_expression->r_tau_b)},
                                  {"terms", terms}};
    } else {
      j["tl-error-expression"] = nullptr;
    }
    if (asymptotic) {
      json t = {{"J", num(asymptotic->J)},
                {"J-TL", num(asymptotic->J_tl)},
                {"total", num(asymptotic->total)},
                {"sigma-next", num(asymptotic->sigma_next)},
                {"unstable-fallback", asymptotic->fallback}};
      if (constants_full && constants_rom)
        t["constants"] = {{"method", to_string(constants_full->method)},
                          {"c", num(constants_full->c)},
                          {"lambda", num(constants_full->lambda)},
                          {"c-hat", num(constants_rom->c)},
                          {"lambda-hat", num(constants_rom->lambda)}};
      j["asymptotic-bound"] = t;
    } else {
      j["asymptotic-bound"] = nullptr;
    }
    if (certificate)
      j["stability-certificate"] = {{"holds", certificate->holds},
                                    {"q-min-eig", num(certificate->q_min_eig)},
                                    {"reach-rank", certificate->reach_rank},
                                    {"order", certificate->order},
                                    {"rank-tol", certificate->rank_tol},
                                    {"rho-a11", num(certificate->rho_a11)}};
    else
      j["stability-certificate"] = nullptr;
    j["notes"] = notes;
    return j;
  }
};

/// Per-iteration solver history as CSV rows (without header).
inline std::string convergence_rows(const std::string& method, const GramianApprox& g, const std::string& solver) {
  std::string out;
  for (const IterationRecord& rec : g.history) {
    out += method + "," + to_string(g.side) + "," + solver + "," + std::to_string(rec.iteration) + "," +
           std::to_string(rec.dim) + "," + csv_number(rec.residual) + "," + csv_number(rec.tl_change) + "," +
           csv_number(rec.shift.real()) + "," + csv_number(rec.shift.imag()) + "\n";
  }
  return out;
}

inline const char* convergence_header() { return "method,side,solver,iteration,dim,residual,tl_change,shift_re,shift_im\n"; }

}  // namespace dtmor
