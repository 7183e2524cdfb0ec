#include "gradcheck_command.hpp"

#include <iomanip>
#include <ostream>
#include <stdexcept>

#include "softmesh/grad_suites.hpp"

bool run_gradcheck(const std::string& module, std::ostream& out) {
  using namespace softmesh;
  std::vector<GradSuiteResult> results;
  if (module == "renderer" || module == "all") {
    results.push_back(renderer_grad_suite());
  }
  if (module == "losses" || module == "all") {
    results.push_back(losses_grad_suite());
  }
  if (results.empty()) throw std::invalid_argument("unknown module " + module);

  bool ok = true;
  out << std::setprecision(3);
  for (const auto& r : results) {
    out << r.name << " (" << kRealName << ", tolerance " << r.tolerance
        << ", " << r.seconds << " s)\n";
    for (const auto& p : r.report.params) {
      if (p.checked == 0) continue;
      out << "  " << std::left << std::setw(36) << p.name << std::right
          << " checked " << std::setw(4) << p.checked << "  max rel error "
          << p.max_rel_error << '\n';
    }
    for (const auto& f : r.report.flagged) {
      out << "  flagged " << r.report.params[f.param].name << '[' << f.index
          << "] analytic " << f.analytic << " numeric " << f.numeric
          << (f.non_finite ? " (non-finite)" : "") << '\n';
    }
    out << "  " << (r.passed() ? "PASS" : "FAIL") << '\n';
    ok = ok && r.passed();
  }
  return ok;
}
