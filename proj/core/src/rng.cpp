#include "s2m/rng.hpp"

#include "s2m/error.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>
#include <numbers>

namespace s2m {

double Rng::normal()
{
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::state() const
{
    std::ostringstream out;
    out << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ' << std::hexfloat << spare_;
    return out.str();
}

void Rng::set_state(const std::string& text)
{
    std::istringstream in(text);
    std::mt19937_64 engine;
    int spare_flag = 0;
    std::string spare_text;
    in >> engine >> spare_flag >> spare_text;
    if (in.fail() || (spare_flag != 0 && spare_flag != 1)) throw ConfigError("rng: malformed state text");
    engine_ = engine;
    has_spare_ = spare_flag == 1;
    spare_ = std::strtod(spare_text.c_str(), nullptr);
}

} // namespace s2m
