#include "fuse/dirichlet.hpp"

#include <algorithm>
#include <cmath>

#include "fuse/special.hpp"

namespace fuse::dirichlet {

namespace {
constexpr double kLogClamp = 1e-12;
}

DirichletParams DirichletParams::clamped(std::vector<double> raw) {
    if (raw.empty()) throw ValidationError("concentration vector must be non-empty");
    for (double& a : raw) {
        if (!std::isfinite(a)) throw ValidationError("concentration must be finite");
        a = std::clamp(a, kMinAlpha, kMaxAlpha);
    }
    DirichletParams p;
    p.alpha = std::move(raw);
    return p;
}

DirichletParams DirichletParams::ones(std::size_t k) {
    return clamped(std::vector<double>(k, 1.0));
}

void DirichletParams::validate() const {
    if (alpha.empty()) throw ValidationError("concentration vector must be non-empty");
    for (double a : alpha) {
        if (!std::isfinite(a) || a <= 0.0) {
            throw ValidationError("concentration components must be finite and positive");
        }
    }
}

WeightVector sample(const DirichletParams& params, RngStream& rng) {
    params.validate();
    const std::size_t k = params.size();
    std::vector<double> g(k);
    for (int attempt = 0; attempt < 100; ++attempt) {
        double sum = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            g[i] = rng.gamma(params.alpha[i]);
            sum += g[i];
        }
        if (sum > 0.0 && std::isfinite(sum)) {
            for (double& x : g) x /= sum;
            WeightVector out;
            out.w = g;
            return out;
        }
    }
    // All gamma draws underflowed (possible only at extreme concentrations).
    return WeightVector::uniform(k);
}

double log_pdf(const DirichletParams& params, const WeightVector& w) {
    params.validate();
    if (w.size() != params.size()) {
        throw ValidationError("weight/concentration dimension mismatch");
    }
    double alpha_sum = 0.0;
    double result = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double a = params.alpha[i];
        alpha_sum += a;
        result -= std::lgamma(a);
        result += (a - 1.0) * std::log(std::max(w[i], kLogClamp));
    }
    return result + std::lgamma(alpha_sum);
}

std::vector<double> log_pdf_grad_alpha(const DirichletParams& params, const WeightVector& w) {
    params.validate();
    if (w.size() != params.size()) {
        throw ValidationError("weight/concentration dimension mismatch");
    }
    double alpha_sum = 0.0;
    for (double a : params.alpha) alpha_sum += a;
    const double psi_sum = digamma(alpha_sum);
    std::vector<double> grad(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        grad[i] = psi_sum - digamma(params.alpha[i]) + std::log(std::max(w[i], kLogClamp));
    }
    return grad;
}

WeightVector mean_weights(const DirichletParams& params) {
    params.validate();
    return WeightVector::normalized(params.alpha);
}

MleResult fit_mle(const std::vector<WeightVector>& samples, int max_iters, double tol) {
    if (samples.size() < 2) {
        throw ValidationError("Dirichlet MLE needs at least 2 samples");
    }
    const std::size_t k = samples[0].size();
    const double n = static_cast<double>(samples.size());

    std::vector<double> mean_log(k, 0.0), mean(k, 0.0), mean_sq(k, 0.0);
    for (const auto& s : samples) {
        if (s.size() != k) throw ValidationError("samples have inconsistent dimension");
        for (std::size_t i = 0; i < k; ++i) {
            const double w = std::max(s[i], kLogClamp);
            mean_log[i] += std::log(w);
            mean[i] += w;
            mean_sq[i] += w * w;
        }
    }
    for (std::size_t i = 0; i < k; ++i) {
        mean_log[i] /= n;
        mean[i] /= n;
        mean_sq[i] /= n;
    }

    // Moment-matching start: per-component precision estimates
    // s_i = (m_i - q_i) / (q_i - m_i^2), median over well-defined ones.
    std::vector<double> precisions;
    for (std::size_t i = 0; i < k; ++i) {
        const double denom = mean_sq[i] - mean[i] * mean[i];
        const double numer = mean[i] - mean_sq[i];
        if (denom > 1e-12 && numer > 0.0) precisions.push_back(numer / denom);
    }
    double precision = static_cast<double>(k);
    if (!precisions.empty()) {
        std::nth_element(precisions.begin(), precisions.begin() + precisions.size() / 2,
                         precisions.end());
        precision = precisions[precisions.size() / 2];
    }
    std::vector<double> alpha(k);
    for (std::size_t i = 0; i < k; ++i) alpha[i] = std::max(mean[i] * precision, 1e-2);

    MleResult result;
    const double ceil = DirichletParams::kMaxAlpha;
    for (int iter = 0; iter < max_iters; ++iter) {
        double alpha_sum = 0.0;
        for (double a : alpha) alpha_sum += a;
        const double psi_sum = digamma(alpha_sum);

        double max_rel = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            double next = inverse_digamma(psi_sum + mean_log[i]);
            next = std::clamp(next, DirichletParams::kMinAlpha, ceil);
            max_rel = std::max(max_rel, std::abs(next - alpha[i]) / std::max(alpha[i], 1e-12));
            alpha[i] = next;
        }
        result.iterations = iter + 1;
        if (max_rel < tol) {
            result.converged = true;
            break;
        }
    }
    result.params = DirichletParams::clamped(std::move(alpha));
    return result;
}

} // namespace fuse::dirichlet
