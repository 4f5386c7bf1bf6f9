#include "superspread/renewal.hpp"

#include <cmath>

namespace superspread
{

namespace
{

void check_step(double load, double r_t, double dispersion)
{
    if (!(load >= 0) || !(r_t > 0) || !(dispersion > 0)) {
        throw InvalidParameterError("transmission step needs load >= 0, R > 0, psi > 0");
    }
}

constexpr std::uint64_t noise_stream_offset = std::uint64_t{1} << 40;

Eigen::MatrixXd draw_noise(const EffectSet& effects, int horizon, std::uint64_t seed)
{
    Eigen::MatrixXd noise(static_cast<Index>(effects.locations.size()), horizon);
    for (Index l = 0; l < noise.rows(); ++l) {
        Rng rng = derive_stream(seed, noise_stream_offset + static_cast<std::uint64_t>(l));
        std::normal_distribution<double> normal(0.0, effects.noise_sd);
        for (int d = 0; d < horizon; ++d) {
            double eps;
            do {
                eps = normal(rng);
            } while (!(eps > -1.0));
            noise(l, d) = eps;
        }
    }
    return noise;
}

} // namespace

std::string_view to_string(TransmissionVariant variant)
{
    return variant == TransmissionVariant::PerIndividual ? "per-individual" : "constant";
}

TransmissionVariant parse_variant(std::string_view text)
{
    if (text == "per-individual") {
        return TransmissionVariant::PerIndividual;
    }
    if (text == "constant") {
        return TransmissionVariant::ConstantDispersion;
    }
    throw ConfigError("unknown transmission variant '" + std::string(text) + "'");
}

std::int64_t step(double load, double r_t, double dispersion, Rng& rng)
{
    check_step(load, r_t, dispersion);
    if (load == 0) {
        return 0;
    }
    return nb_sample(r_t * load, dispersion * load, rng);
}

std::int64_t step_constant_dispersion(double load, double r_t, double dispersion, Rng& rng)
{
    check_step(load, r_t, dispersion);
    if (load == 0) {
        return 0;
    }
    return nb_sample(r_t * load, dispersion, rng);
}

std::int64_t step(TransmissionVariant variant, double load, double r_t, double dispersion, Rng& rng)
{
    return variant == TransmissionVariant::PerIndividual ? step(load, r_t, dispersion, rng)
                                                         : step_constant_dispersion(load, r_t, dispersion, rng);
}

ModelParams make_params(std::vector<CompartmentKey> compartments, std::vector<std::string> covariates)
{
    ModelParams p;
    p.effects = EffectSet::for_compartments(std::move(compartments), std::move(covariates));
    p.dispersion = Eigen::VectorXd::Ones(static_cast<Index>(p.effects.age_groups.size()));
    return p;
}

SimulatedPanel simulate(const ModelParams& params, const CovariatePanel& covariates, int horizon,
                        TransmissionVariant variant, std::uint64_t seed)
{
    const EffectSet& effects = params.effects;
    if (horizon < 0) {
        throw InvalidParameterError("horizon must be >= 0");
    }
    if (covariates.names != effects.covariates) {
        throw DataValidationError("covariate panel does not match the effect set's covariates");
    }
    if (params.dispersion.size() != static_cast<Index>(effects.age_groups.size())) {
        throw InvalidParameterError("dispersion must have one entry per age group");
    }
    if (!(params.reporting_rate > 0 && params.reporting_rate <= 1)) {
        throw InvalidParameterError("reporting rate must lie in (0, 1]");
    }
    const auto n_comp = effects.compartments.size();
    if (!params.latent.empty() && params.latent.size() != n_comp) {
        throw InvalidParameterError("explicit latent infections must cover every compartment");
    }
    const Delay generation = params.generation();
    const Delay incubation = params.incubation();
    const int init = params.init_days;

    SimulatedPanel out;
    out.compartments = effects.compartments;
    out.window_start = covariates.start;
    out.horizon = horizon;
    out.expected_cases = Eigen::MatrixXd::Zero(static_cast<Index>(n_comp), horizon);
    out.sampled_cases = CountMatrix::Zero(static_cast<Index>(n_comp), horizon);
    if (effects.has_noise()) {
        if (effects.noise.cols() < horizon) {
            throw DataValidationError("noise terms do not cover the horizon");
        }
        out.noise = effects.noise.leftCols(horizon);
    }
    else if (effects.noise_sd > 0) {
        out.noise = draw_noise(effects, horizon, seed);
    }

    for (std::size_t c = 0; c < n_comp; ++c) {
        const auto& key = effects.compartments[c];
        const int loc = covariates.location_index(key.location);
        if (loc < 0 && covariates.size() > 0) {
            throw DataValidationError("no covariates for compartment " + to_string(key));
        }
        if (covariates.size() > 0 && covariates.n_days < horizon) {
            throw DataValidationError("covariates for " + to_string(key) + " end before day " +
                                      std::to_string(covariates.n_days) + " of the horizon");
        }
        Rng rng = derive_stream(seed, c);
        const int age = effects.compartment_age[c];
        const int eloc = effects.compartment_location[c];
        const double psi = params.dispersion(age);

        LatentTrajectory traj;
        traj.start_day = covariates.start + (-init);
        traj.init_days = init;
        traj.infections = Counts::Zero(init + horizon);
        traj.viral_load = Eigen::VectorXd::Zero(init + horizon);
        traj.r_values = Eigen::VectorXd::Zero(horizon);

        if (!params.latent.empty()) {
            if (params.latent[c].size() < init) {
                throw InvalidParameterError("explicit latent infections shorter than the seeded days");
            }
            traj.infections.head(init) = params.latent[c].head(init);
        }
        else {
            std::exponential_distribution<double> seed_dist(init / params.init_mean);
            for (int k = 0; k < init; ++k) {
                traj.infections(k) = params.init_mean > 0 ? std::llround(seed_dist(rng)) : 0;
            }
        }
        for (int k = 1; k < init; ++k) {
            traj.viral_load(k) = viral_load(traj.infections.head(k), generation);
        }

        for (int t = 0; t < horizon; ++t) {
            const int k = init + t;
            double r = effects.r0(static_cast<Index>(c));
            for (Index j = 0; j < covariates.size(); ++j) {
                const double x = covariates.values[static_cast<std::size_t>(loc)](t, j);
                if (!std::isfinite(x)) {
                    throw DataValidationError("missing covariate '" + covariates.names[static_cast<std::size_t>(j)] +
                                              "' for " + to_string(key) + " on " +
                                              format_date(covariates.start + t));
                }
                const double factor = 1.0 + effects.beta(age, j) * x;
                if (!(factor > 0)) {
                    throw NonPositiveRateError(covariates.names[static_cast<std::size_t>(j)], factor);
                }
                r *= factor;
            }
            if (out.noise.size() > 0) {
                r *= 1.0 + out.noise(eloc, t);
            }
            const double load = viral_load(traj.infections.head(k), generation);
            traj.viral_load(k) = load;
            traj.r_values(t) = r;
            if (load == 0 && !traj.extinction_day) {
                traj.extinction_day = t;
            }
            traj.infections(k) = step(variant, load, r, psi, rng);
        }
        for (int t = 0; t < horizon; ++t) {
            const double e = expected_cases(traj.infections, incubation, params.reporting_rate, init + t);
            out.expected_cases(static_cast<Index>(c), t) = e;
            out.sampled_cases(static_cast<Index>(c), t) = poisson_sample(e, rng);
        }
        out.latent.push_back(std::move(traj));
    }
    return out;
}

} // namespace superspread
