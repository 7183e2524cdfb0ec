#pragma once

#include <iosfwd>
#include <string>

// Runs the double-precision gradient suites for "renderer", "losses" or
// "all". Returns true when every suite passes.
bool run_gradcheck(const std::string& module, std::ostream& out);
