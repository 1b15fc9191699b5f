#pragma once

#include <ostream>

namespace phonecls {

/// Exit codes: 0 success, 2 configuration or usage error, 3 data error,
/// 4 runtime failure.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace phonecls
