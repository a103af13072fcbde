#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace rmlab {

// Single exception type for contract violations, parse failures and numeric
// aborts. The message is the diagnostic; callers match on substrings.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline void msg_concat(std::ostringstream&) {}
template <class T, class... Rest>
void msg_concat(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  msg_concat(os, rest...);
}
}  // namespace detail

template <class... Parts>
[[noreturn]] void fail(const Parts&... parts) {
  std::ostringstream os;
  detail::msg_concat(os, parts...);
  throw Error(os.str());
}

template <class... Parts>
void require(bool cond, const Parts&... parts) {
  if (!cond) fail(parts...);
}

}  // namespace rmlab
