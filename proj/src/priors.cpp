#include "redist/priors.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace redist {

Prior parse_prior(const std::string& text) {
  Prior prior;
  if (text == "uniform") {
    prior.kind = Prior::Kind::Uniform01;
    return prior;
  }
  if (text.rfind("normal:", 0) == 0) {
    std::istringstream in(text.substr(7));
    std::string mean_str, sd_str;
    if (std::getline(in, mean_str, ':') && std::getline(in, sd_str)) {
      prior.kind = Prior::Kind::Normal;
      prior.mean = std::stod(mean_str);
      prior.stddev = std::stod(sd_str);
      if (prior.stddev <= 0.0) {
        throw std::invalid_argument("prior stddev must be positive");
      }
      return prior;
    }
  }
  throw std::invalid_argument("unknown prior: " + text +
                              " (expected uniform or normal:<mean>:<stddev>)");
}

std::string prior_name(const Prior& prior) {
  if (prior.kind == Prior::Kind::Uniform01) return "uniform";
  std::ostringstream out;
  out << "normal:" << prior.mean << ":" << prior.stddev;
  return out.str();
}

double pdf(const Prior& prior, double x) {
  if (!(x >= 0.0 && x <= 1.0)) {
    throw std::domain_error("pdf argument outside [0,1]");
  }
  double density;
  if (prior.kind == Prior::Kind::Uniform01) {
    density = 1.0;
  } else {
    if (prior.stddev <= 0.0) {
      throw std::invalid_argument("prior stddev must be positive");
    }
    const double z = (x - prior.mean) / prior.stddev;
    density = std::exp(-0.5 * z * z) /
              (prior.stddev * std::sqrt(2.0 * M_PI));
  }
  if (prior.pdf_base == Prior::PdfBase::Ten) {
    // 10^{log_prob} with natural-log log_prob, i.e. density^{ln 10}.
    density = std::pow(density, std::log(10.0));
  }
  return density;
}

double sample_value(const Prior& prior, RngStream& rng) {
  if (prior.kind == Prior::Kind::Uniform01) return rng.uniform01();
  if (prior.stddev <= 0.0) {
    throw std::invalid_argument("prior stddev must be positive");
  }
  for (;;) {
    const double x = rng.normal(prior.mean, prior.stddev);
    if (x >= 0.0 && x <= 1.0) return x;
  }
}

TypeProfile sample_profile(const Prior& prior, int n, RngStream& rng) {
  if (n < 2) throw std::invalid_argument("need n >= 2 agents");
  TypeProfile profile;
  profile.values.resize(n);
  for (double& v : profile.values) v = sample_value(prior, rng);
  return profile;
}

FeedSample feed_resample(const TypeProfile& profile, const Prior& prior,
                         RngStream& rng) {
  validate(profile);
  FeedSample sample;
  sample.profile = profile;
  sample.replaced_index = static_cast<int>(rng.uniform_int(profile.n()));
  sample.replaced_value = rng.uniform01();
  sample.profile.values[sample.replaced_index] = sample.replaced_value;
  sample.weight = pdf(prior, sample.replaced_value);
  return sample;
}

}  // namespace redist
