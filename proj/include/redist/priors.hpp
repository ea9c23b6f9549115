#pragma once

#include <string>

#include "redist/mechanism.hpp"
#include "redist/rng.hpp"

namespace redist {

// Type-profile prior. Normal draws are rejection-sampled into [0,1]; the
// density reported by pdf() is the untruncated Gaussian density, matching
// the library log_prob convention of the reference experiments.
struct Prior {
  enum class Kind { Uniform01, Normal };
  enum class PdfBase { E, Ten };

  Kind kind = Kind::Uniform01;
  double mean = 0.5;
  double stddev = 0.1;
  PdfBase pdf_base = PdfBase::E;
};

// "uniform" or "normal:<mean>:<stddev>".
Prior parse_prior(const std::string& text);
std::string prior_name(const Prior& prior);

// Density at x in [0,1]. PdfBase::Ten maps the natural log-density L to
// 10^L instead of e^L. Throws outside [0,1] or for stddev <= 0.
double pdf(const Prior& prior, double x);

double sample_value(const Prior& prior, RngStream& rng);
TypeProfile sample_profile(const Prior& prior, int n, RngStream& rng);

// One profile coordinate replaced by a fresh Uniform(0,1) draw, weighted by
// the prior density of the replacement.
struct FeedSample {
  TypeProfile profile;
  int replaced_index = 0;
  double replaced_value = 0.0;
  double weight = 1.0;
};

FeedSample feed_resample(const TypeProfile& profile, const Prior& prior,
                         RngStream& rng);

}  // namespace redist
