// One line per criterion: PASS/FAIL/SKIP, id, name, measured value, bound.
// Criteria can be selected by number on the command line. The optional
// reservoir check reads its dataset from MFDG_SPE10_FILE.
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "mfdg/bench/acceptance.hpp"

int main(int argc, char** argv) {
  std::vector<int> ids;
  bool verbose = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "-v" || a == "--verbose") {
      verbose = true;
      continue;
    }
    try {
      ids.push_back(std::stoi(a));
    } catch (const std::exception&) {
      std::cerr << "usage: acceptance [-v] [criterion ...]\n";
      return 2;
    }
  }
  mfdg::bench::VerifyOptions opts;
  if (const char* f = std::getenv("MFDG_SPE10_FILE")) opts.spe10_file = f;
  if (verbose) opts.log = &std::cerr;
  const int failures = mfdg::bench::run_acceptance(ids, opts, std::cout);
  std::cout << (failures == 0 ? "acceptance: all criteria passed" : "acceptance: " + std::to_string(failures) + " failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
