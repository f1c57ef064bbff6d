#pragma once

#include "cqs/linalg.hpp"

#include <string>
#include <vector>

namespace cqs {

struct Dataset {
  Matrix x;
  Vector y;
  std::vector<std::string> names;  // one per predictor column
  std::string response_name = "Y";
};

}  // namespace cqs
