#include "l2flow/acceptance.hpp"

#include <cstdlib>
#include <iostream>
#include <string>

// One line per criterion; nonzero exit if any fails. Arguments pick a suite
// or individual criterion ids, default all.
int main(int argc, char** argv) {
  std::vector<int> ids;
  try {
    for (int i = 1; i < argc; ++i) {
      const std::string a = argv[i];
      if (!a.empty() && std::isdigit(static_cast<unsigned char>(a[0]))) {
        ids.push_back(std::stoi(a));
      } else {
        const auto s = l2flow::suite_criteria(a);
        ids.insert(ids.end(), s.begin(), s.end());
      }
    }
    if (ids.empty()) ids = l2flow::suite_criteria("all");
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  int failed = 0;
  for (int id : ids) {
    const auto r = l2flow::run_criterion(id);
    std::cout << l2flow::format_result(r) << std::endl;
    if (!r.passed) ++failed;
  }
  std::cout << (ids.size() - failed) << "/" << ids.size() << " criteria passed" << std::endl;
  return failed ? 1 : 0;
}
