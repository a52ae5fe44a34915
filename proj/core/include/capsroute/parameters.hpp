#pragma once

#include <string>
#include <vector>

#include "capsroute/tensor.hpp"

namespace capsroute {

struct Parameter {
  std::string name;
  Tensor value;
};

using ParameterList = std::vector<Parameter>;

}  // namespace capsroute
