#include "kfp/provisioning.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "kfp/errors.hpp"

namespace kfp {

namespace {

bool unit_interval(double x) { return x >= 0.0 && x <= 1.0; }

// Binomial(n, p) pmf built by repeated Bernoulli convolution; exact at p in {0, 1}.
std::vector<double> binomial_pmf(std::size_t n, double p) {
  std::vector<double> pmf(n + 1, 0.0);
  pmf[0] = 1.0;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = i; j > 0; --j) pmf[j] = pmf[j] * (1.0 - p) + pmf[j - 1] * p;
    pmf[0] *= 1.0 - p;
  }
  return pmf;
}

}  // namespace

void ChannelParams::validate() const {
  if (!unit_interval(p) || !unit_interval(q) || !unit_interval(lambda)) {
    throw InputError("channel parameters p, q, lambda must lie in [0,1]");
  }
}

double tpr(const ChannelParams& c) {
  const double num = c.p * c.lambda;
  const double den = num + (1.0 - c.q) * (1.0 - c.lambda);
  if (den <= 0.0) throw DegenerateChannel("true positive ratio undefined: no predicted positives possible");
  return num / den;
}

double tnr(const ChannelParams& c) {
  const double num = c.q * (1.0 - c.lambda);
  const double den = num + (1.0 - c.p) * c.lambda;
  if (den <= 0.0) throw DegenerateChannel("true negative ratio undefined: no predicted negatives possible");
  return num / den;
}

std::vector<double> posterior_cdf_table(std::size_t a_hat, std::size_t frames, const ChannelParams& c) {
  c.validate();
  if (a_hat > frames) throw ContractViolation("predicted key count exceeds frames per slot");
  std::vector<double> cdf(frames + 1, 0.0);
  if (c.lambda == 1.0) {
    cdf[frames] = 1.0;
    return cdf;
  }
  if (c.lambda == 0.0) {
    std::fill(cdf.begin(), cdf.end(), 1.0);
    return cdf;
  }
  const std::vector<double> y = a_hat > 0 ? binomial_pmf(a_hat, tpr(c)) : std::vector<double>{1.0};
  const std::vector<double> z = frames > a_hat ? binomial_pmf(frames - a_hat, 1.0 - tnr(c)) : std::vector<double>{1.0};
  std::vector<double> sum(frames + 1, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t j = 0; j < z.size(); ++j) sum[i + j] += y[i] * z[j];
  }
  double acc = 0.0;
  for (std::size_t k = 0; k <= frames; ++k) {
    acc += sum[k];
    cdf[k] = std::min(acc, 1.0);
  }
  cdf[frames] = 1.0;
  return cdf;
}

double posterior_cdf(long k, std::size_t a_hat, std::size_t frames, const ChannelParams& c) {
  const auto table = posterior_cdf_table(a_hat, frames, c);
  if (k < 0) return 0.0;
  if (static_cast<std::size_t>(k) >= frames) return 1.0;
  return table[static_cast<std::size_t>(k)];
}

std::size_t k_star(std::size_t a_hat, std::size_t frames, const ChannelParams& c, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ContractViolation("epsilon must lie in (0,1)");
  const auto table = posterior_cdf_table(a_hat, frames, c);
  for (std::size_t k = 0; k <= frames; ++k) {
    if (table[k] >= epsilon) return k;
  }
  return frames;
}

void RadioConfig::validate() const {
  if (frames_per_slot == 0) throw InputError("radio.frames_per_slot must be positive");
  if (!(alpha_bits > 0.0)) throw InputError("radio.alpha_bits must be positive");
  if (!(upload_window_s > 0.0)) throw InputError("radio.upload_window_s must be positive");
  if (!(rb_bandwidth_hz > 0.0)) throw InputError("radio.rb_bandwidth_hz must be positive");
  if (!(rb_duration_s > 0.0)) throw InputError("radio.rb_duration_s must be positive");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InputError("radio.epsilon must lie in (0,1)");
  if (!std::isfinite(snr_db)) throw InputError("radio.snr_db must be finite");
}

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

double spectral_efficiency(double snr_db, LogBase base) {
  const double linear = db_to_linear(snr_db);
  if (!(linear > -1.0) || !std::isfinite(linear)) throw InputError("SNR out of range");
  return base == LogBase::two ? std::log2(1.0 + linear) : std::log1p(linear);
}

std::int64_t rb_count(double hz, const RadioConfig& r) {
  if (hz <= 0.0) return 0;
  return static_cast<std::int64_t>(std::ceil(hz / r.rb_bandwidth_hz));
}

Bandwidth bandwidth_for_k(std::size_t k, const RadioConfig& r) { return bandwidth_for_k(k, r, r.snr_db); }

Bandwidth bandwidth_for_k(std::size_t k, const RadioConfig& r, double snr_db) {
  if (k == 0) return {};
  const double denom = r.upload_window_s * spectral_efficiency(snr_db, r.log_base);
  if (!(denom > 0.0)) throw InputError("non-positive spectral efficiency");
  Bandwidth b;
  b.hz = r.alpha_bits * static_cast<double>(k) / denom;
  b.rbs = rb_count(b.hz, r);
  return b;
}

bool bandwidth_covers(std::size_t k, double hz, const RadioConfig& r, double snr_db) {
  const double need = r.alpha_bits * static_cast<double>(k);
  const double capacity = r.upload_window_s * hz * spectral_efficiency(snr_db, r.log_base);
  return need <= capacity * (1.0 + 1e-12);
}

std::string_view to_string(EstimationMode mode) {
  switch (mode) {
    case EstimationMode::fine: return "fine";
    case EstimationMode::coarse: return "coarse";
    case EstimationMode::fixed: return "fixed";
  }
  throw ContractViolation("unknown estimation mode");
}

EstimationMode parse_estimation_mode(std::string_view name) {
  if (name == "fine") return EstimationMode::fine;
  if (name == "coarse") return EstimationMode::coarse;
  if (name == "fixed") return EstimationMode::fixed;
  throw InputError("unknown estimation mode '" + std::string(name) + "'");
}

ChannelParams estimate_channel(std::span<const SlotOutcome> history) {
  std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
  for (const auto& slot : history) {
    if (slot.actual.size() != slot.predicted.size()) throw ContractViolation("slot outcome sizes differ");
    for (std::size_t i = 0; i < slot.actual.size(); ++i) {
      const bool a = slot.actual[i] != 0;
      const bool p = slot.predicted[i] != 0;
      if (a && p) ++tp;
      else if (a) ++fn;
      else if (p) ++fp;
      else ++tn;
    }
  }
  ChannelParams c;
  c.p = (tp + 1.0) / (tp + fn + 2.0);
  c.q = (tn + 1.0) / (tn + fp + 2.0);
  c.lambda = (tp + fn + 1.0) / (tp + fn + tn + fp + 2.0);
  return c;
}

TaggedChannelParams estimate_channel(std::span<const SlotOutcome> history, EstimationMode mode) {
  TaggedChannelParams out;
  if (mode == EstimationMode::coarse) {
    out.detailed = out.simplified = estimate_channel(history);
  } else if (mode == EstimationMode::fine) {
    std::vector<SlotOutcome> d, s;
    for (const auto& slot : history) (slot.model_tag == ModelTag::detailed ? d : s).push_back(slot);
    out.detailed = estimate_channel(d);
    out.simplified = estimate_channel(s);
  } else {
    throw ContractViolation("fixed mode does not estimate channel parameters");
  }
  return out;
}

double normal_quantile(double probability) {
  if (!(probability > 0.0 && probability < 1.0)) throw ContractViolation("quantile probability must lie in (0,1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double low = 0.02425;
  double x;
  if (probability < low) {
    const double t = std::sqrt(-2.0 * std::log(probability));
    x = (((((c[0] * t + c[1]) * t + c[2]) * t + c[3]) * t + c[4]) * t + c[5]) /
        ((((d[0] * t + d[1]) * t + d[2]) * t + d[3]) * t + 1.0);
  } else if (probability <= 1.0 - low) {
    const double u = probability - 0.5;
    const double r = u * u;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * u /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double t = std::sqrt(-2.0 * std::log1p(-probability));
    x = -(((((c[0] * t + c[1]) * t + c[2]) * t + c[3]) * t + c[4]) * t + c[5]) /
        ((((d[0] * t + d[1]) * t + d[2]) * t + d[3]) * t + 1.0);
  }
  // One Halley step against erfc.
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - probability;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

std::string_view to_string(SlicingMode mode) {
  return mode == SlicingMode::variance_scaled ? "variance-scaled" : "clt-consistent";
}

SlicingMode parse_slicing_mode(std::string_view name) {
  if (name == "variance-scaled") return SlicingMode::variance_scaled;
  if (name == "clt-consistent") return SlicingMode::clt_consistent;
  throw InputError("unknown slicing mode '" + std::string(name) + "'");
}

PopulationMoments estimate_population_moments(std::span<const std::size_t> counts) {
  if (counts.empty()) throw ContractViolation("population moments need at least one observation");
  PopulationMoments m;
  m.observations = counts.size();
  double sum = 0.0;
  for (auto k : counts) sum += static_cast<double>(k);
  m.mean = sum / static_cast<double>(counts.size());
  if (counts.size() > 1) {
    double ss = 0.0;
    for (auto k : counts) ss += (static_cast<double>(k) - m.mean) * (static_cast<double>(k) - m.mean);
    m.variance = ss / static_cast<double>(counts.size() - 1);
  }
  return m;
}

double slicing_inner(double mean, double variance, std::size_t devices, double epsilon, SlicingMode mode) {
  if (devices == 0) throw ContractViolation("slicing needs at least one device");
  if (variance < 0.0) throw ContractViolation("variance must be non-negative");
  const double z = normal_quantile(epsilon);
  const double n = static_cast<double>(devices);
  const double spread = mode == SlicingMode::variance_scaled ? variance / n : std::sqrt(variance) / std::sqrt(n);
  return mean + z * spread;
}

SlicingReservation slicing_bandwidth(double mean, double variance, std::size_t devices, double epsilon,
                                     const RadioConfig& r, SlicingMode mode, double mean_snr_db) {
  SlicingReservation s;
  s.inner = slicing_inner(mean, variance, devices, epsilon, mode);
  const double level = std::ceil(s.inner - 1e-12);
  s.per_device_k = level > 0.0 ? static_cast<std::size_t>(level) : 0;
  const Bandwidth share = bandwidth_for_k(s.per_device_k, r, mean_snr_db);
  s.per_device_hz = share.hz;
  s.per_device_rbs = share.rbs;
  s.total_hz = share.hz * static_cast<double>(devices);
  return s;
}

}  // namespace kfp
