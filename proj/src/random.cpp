#include "bmpnet/random.hpp"

#include <sstream>

#include "bmpnet/error.hpp"

namespace bmp {

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_;
  if (is.fail()) throw Error("rng: malformed generator state");
}

}  // namespace bmp
