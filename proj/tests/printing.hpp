#pragma once

#include <ostream>

#include "dentalx/geometry.hpp"

namespace dentalx {

inline std::ostream& operator<<(std::ostream& os, const Box& b) {
  return os << "(" << b.x1 << ", " << b.y1 << ", " << b.x2 << ", " << b.y2 << ")";
}

inline std::ostream& operator<<(std::ostream& os, const Detection& d) {
  return os << "{" << d.box << " class " << d.class_id << " score " << d.score << "}";
}

}  // namespace dentalx
