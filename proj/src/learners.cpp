#include "olrbench/learners.hpp"

#include <algorithm>
#include <cctype>

namespace olrbench {

std::string_view to_string(Algorithm algorithm) noexcept
{
    switch (algorithm) {
    case Algorithm::sgd: return "SGD";
    case Algorithm::mbgd: return "MBGD";
    case Algorithm::lms: return "LMS";
    case Algorithm::orr: return "ORR";
    case Algorithm::olr: return "OLR";
    case Algorithm::rls: return "RLS";
    case Algorithm::pa: return "PA";
    case Algorithm::olr_wa: return "OLR-WA";
    }
    return "?";
}

Algorithm parse_algorithm(std::string_view text)
{
    std::string upper(text);
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
    std::replace(upper.begin(), upper.end(), '_', '-');
    for (Algorithm a : kAllAlgorithms)
        if (to_string(a) == upper)
            return a;
    throw ValidationError(Stage::config, "unknown algorithm id '" + std::string(text) + "'");
}

LearnerConfig LearnerConfig::defaults(Algorithm algorithm)
{
    LearnerConfig c;
    c.algorithm = algorithm;
    switch (algorithm) {
    case Algorithm::sgd: c.eta = 0.01, c.epochs = 2; break;
    case Algorithm::mbgd: c.eta = 0.01, c.epochs = 5; break;
    case Algorithm::lms: c.eta = 0.01, c.epochs = 1; break;
    case Algorithm::orr: c.eta = 0.01, c.epochs = 2, c.lambda = 0.1; break;
    case Algorithm::olr: c.eta = 0.01, c.epochs = 2, c.lambda = 0.1; break;
    case Algorithm::rls: c.lambda = 0.99, c.delta = 0.01; break;
    case Algorithm::pa: c.C = 0.1, c.epsilon = 0.1; break;
    case Algorithm::olr_wa: c.w_base = 0.5, c.w_inc = 0.5; break;
    }
    return c;
}

namespace {

void require(bool ok, Algorithm a, const std::string& what)
{
    if (!ok)
        throw ValidationError(Stage::config, std::string(to_string(a)) + " config: " + what);
}

} // namespace

void LearnerConfig::validate() const
{
    const auto a = algorithm;
    switch (a) {
    case Algorithm::sgd:
    case Algorithm::mbgd:
    case Algorithm::lms:
    case Algorithm::orr:
    case Algorithm::olr:
        // eta == 0 is accepted: it freezes the model, which the evaluation tests rely on.
        require(std::isfinite(eta) && eta >= 0.0, a, "eta must be finite and >= 0");
        require(epochs >= 1, a, "epochs must be >= 1");
        if (a == Algorithm::orr || a == Algorithm::olr)
            require(std::isfinite(lambda) && lambda >= 0.0, a, "lambda must be finite and >= 0");
        break;
    case Algorithm::rls:
        require(lambda > 0.0 && lambda <= 1.0, a, "forgetting factor lambda must lie in (0, 1]");
        require(std::isfinite(delta) && delta > 0.0, a, "delta must be > 0");
        break;
    case Algorithm::pa:
        require(std::isfinite(C) && C > 0.0, a, "C must be > 0");
        require(std::isfinite(epsilon) && epsilon >= 0.0, a, "epsilon must be >= 0");
        break;
    case Algorithm::olr_wa:
        require(w_base >= 0.0 && w_inc >= 0.0, a, "weights must be >= 0");
        require(w_base + w_inc > 0.0, a, "w_base + w_inc must be > 0");
        break;
    default: throw ValidationError(Stage::config, "unknown algorithm id");
    }
}

} // namespace olrbench
