#pragma once

#include <stdexcept>
#include <string>

namespace omoq {

// All recoverable failures surface as omoq::Error. The CLI turns these into a
// single-line "error: <what>" on stderr and a nonzero exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw Error(msg);
}

} // namespace omoq
