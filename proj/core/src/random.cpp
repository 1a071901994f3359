#include "ssmg/random.hpp"

#include <sstream>

#include "ssmg/error.hpp"

namespace ssmg {

std::string serialize_rng(const Rng& rng) {
    std::ostringstream out;
    out << rng;
    return out.str();
}

Rng deserialize_rng(const std::string& text) {
    std::istringstream in(text);
    Rng rng;
    in >> rng;
    if (in.fail()) throw IntegrityError("random engine state could not be parsed");
    return rng;
}

}  // namespace ssmg
