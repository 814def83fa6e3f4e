#include "wavevae/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "wavevae/error.hpp"

namespace wvae {

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw DomainError("Rng::below: empty range");
    // Rejection keeps the draw unbiased.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
        v = engine_();
    } while (v >= limit);
    return v % n;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::string Rng::state() const {
    std::ostringstream os;
    os.precision(17);
    os << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ' << std::hexfloat << spare_;
    return os.str();
}

void Rng::restore(const std::string& text) {
    std::istringstream is(text);
    std::mt19937_64 engine;
    int spare_flag = 0;
    std::string spare_text;
    is >> engine >> spare_flag >> spare_text;
    if (!is && !is.eof()) throw FormatError("Rng::restore: malformed state");
    if (spare_text.empty()) throw FormatError("Rng::restore: truncated state");
    engine_ = engine;
    has_spare_ = spare_flag != 0;
    spare_ = std::strtod(spare_text.c_str(), nullptr);
}

Tensor sample_normal(Rng& rng, Shape shape) {
    Tensor t(std::move(shape));
    for (auto& v : t.mutable_values()) v = static_cast<float>(rng.normal());
    return t;
}

Tensor sample_uniform(Rng& rng, Shape shape, float lo, float hi) {
    Tensor t(std::move(shape));
    for (auto& v : t.mutable_values()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

}  // namespace wvae
