#ifndef MVFACE_ERROR_HPP
#define MVFACE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace mvface {

enum class Errc {
    invalid_argument,
    io,
    unsupported_format,
    empty_image,
    out_of_bounds,
    data_validation,
    numeric,
};

inline const char* errc_name(Errc e) {
    switch (e) {
    case Errc::invalid_argument: return "invalid argument";
    case Errc::io: return "i/o error";
    case Errc::unsupported_format: return "unsupported format";
    case Errc::empty_image: return "empty image";
    case Errc::out_of_bounds: return "out of bounds";
    case Errc::data_validation: return "data validation";
    case Errc::numeric: return "numeric failure";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

// Process exit codes shared by the command-line tools.
inline int exit_code_for(Errc e) {
    switch (e) {
    case Errc::invalid_argument: return 2;
    case Errc::io: return 3;
    case Errc::unsupported_format:
    case Errc::empty_image:
    case Errc::out_of_bounds:
    case Errc::data_validation: return 4;
    case Errc::numeric: return 5;
    }
    return 1;
}

}  // namespace mvface

#endif  // MVFACE_ERROR_HPP
