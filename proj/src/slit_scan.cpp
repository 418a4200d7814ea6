#include "ionguide/slit_scan.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "ionguide/error.hpp"

namespace ionguide {

namespace {

bool uniform_steps(const std::vector<double>& x, double step) {
  for (std::size_t i = 1; i < x.size(); ++i)
    if (std::abs((x[i] - x[i - 1]) - step) > 1e-6 * step) return false;
  return true;
}

// Antiderivative of the piecewise-linear interpolant, zero before the first sample.
class CumulativeIntegral {
 public:
  explicit CumulativeIntegral(const Profile1D& p) : x_(p.positions), f_(p.values), c_(p.values.size(), 0.0) {
    for (std::size_t k = 1; k < x_.size(); ++k) c_[k] = c_[k - 1] + 0.5 * (f_[k] + f_[k - 1]) * (x_[k] - x_[k - 1]);
  }

  double operator()(double x) const {
    if (x <= x_.front()) return 0.0;
    if (x >= x_.back()) return c_.back();
    const auto k = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin()) - 1;
    const double h = x_[k + 1] - x_[k];
    const double t = x - x_[k];
    return c_[k] + f_[k] * t + (f_[k + 1] - f_[k]) * t * t / (2.0 * h);
  }

 private:
  std::vector<double> x_, f_, c_;
};

std::vector<double> normalisation(std::size_t n, const std::vector<double>& kernel) {
  const auto half = static_cast<long>(kernel.size() / 2);
  std::vector<double> norm(n, 0.0);
  for (long i = 0; i < static_cast<long>(n); ++i)
    for (long k = -half; k <= half; ++k) {
      const long j = i + k;
      if (j >= 0 && j < static_cast<long>(n)) norm[static_cast<std::size_t>(i)] += kernel[static_cast<std::size_t>(k + half)];
    }
  return norm;
}

// Adjoint of convolve_tophat.
std::vector<double> correlate_tophat(const std::vector<double>& r, const std::vector<double>& kernel,
                                     const std::vector<double>& norm) {
  const auto half = static_cast<long>(kernel.size() / 2);
  const auto n = static_cast<long>(r.size());
  std::vector<double> out(r.size(), 0.0);
  for (long i = 0; i < n; ++i) {
    const double ri = r[static_cast<std::size_t>(i)] / norm[static_cast<std::size_t>(i)];
    for (long k = -half; k <= half; ++k) {
      const long j = i + k;
      if (j >= 0 && j < n) out[static_cast<std::size_t>(j)] += kernel[static_cast<std::size_t>(k + half)] * ri;
    }
  }
  return out;
}

double relative_l2(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

}  // namespace

void Profile1D::validate() const {
  if (positions.size() != values.size()) fail_validation("invalid_profile", "positions and values differ in length");
  if (positions.size() < 2) fail_validation("invalid_profile", "a profile needs at least two samples");
  const double h = positions[1] - positions[0];
  if (!(h > 0.0)) fail_validation("invalid_profile", "positions must be strictly increasing");
  if (!uniform_steps(positions, h)) fail_validation("invalid_profile", "positions must be uniformly spaced");
  for (double v : values)
    if (!(v >= 0.0) || !std::isfinite(v)) fail_validation("invalid_profile", "intensities must be finite and >= 0");
}

double Profile1D::step() const { return (positions.back() - positions.front()) / static_cast<double>(positions.size() - 1); }

double Profile1D::integral() const {
  double s = 0.0;
  for (std::size_t k = 1; k < values.size(); ++k) s += 0.5 * (values[k] + values[k - 1]) * (positions[k] - positions[k - 1]);
  return s;
}

void ScanTrace::validate() const {
  profile().validate();
  if (!(slit_width > 0.0)) fail_validation("invalid_trace", "slit width must be positive");
  if (!(step > 0.0)) fail_validation("invalid_trace", "step must be positive");
  if (!uniform_steps(positions, step)) fail_validation("invalid_trace", "positions do not follow the declared step");
}

ScanTrace simulate_scan(const Profile1D& profile, double slit_width, double step, double start, double stop,
                        const NoiseModel& noise) {
  profile.validate();
  if (!(slit_width > 0.0) || !(step > 0.0)) fail_validation("invalid_trace", "slit width and step must be positive");
  if (profile.step() > 0.25 * slit_width * (1.0 + 1e-9))
    fail_validation("sampling_too_coarse", "profile must be sampled at least 4x finer than the slit width");
  if (!(stop >= start)) fail_validation("invalid_trace", "scan stop precedes start");

  const CumulativeIntegral F(profile);
  ScanTrace t;
  t.slit_width = slit_width;
  t.step = step;
  const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-6)) + 1;
  t.positions.resize(n);
  t.values.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double p = start + static_cast<double>(k) * step;
    t.positions[k] = p;
    t.values[k] = std::max(0.0, (F(p + 0.5 * slit_width) - F(p - 0.5 * slit_width)) / slit_width);
  }

  if (noise.floor_db || noise.proportional_sigma > 0.0) {
    std::mt19937_64 rng(noise.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double peak = *std::max_element(t.values.begin(), t.values.end());
    const double level = noise.floor_db ? peak * std::pow(10.0, *noise.floor_db / 10.0) : 0.0;
    std::uniform_real_distribution<double> uni(0.0, 2.0 * level);
    for (double& v : t.values) {
      if (noise.proportional_sigma > 0.0) v *= 1.0 + noise.proportional_sigma * gauss(rng);
      if (level > 0.0) v += uni(rng);
      v = std::max(v, 0.0);
    }
    if (level > 0.0) t.noise_floor = level;
  }
  return t;
}

ScanTrace simulate_scan(const Profile1D& profile, double slit_width, double step, const NoiseModel& noise) {
  profile.validate();
  return simulate_scan(profile, slit_width, step, profile.positions.front() - 0.5 * slit_width,
                       profile.positions.back() + 0.5 * slit_width, noise);
}

std::vector<double> tophat_kernel(double slit_width, double step) {
  if (!(slit_width > 0.0) || !(step > 0.0)) fail_validation("invalid_trace", "slit width and step must be positive");
  const double h = 0.5 * slit_width / step;
  const auto half = static_cast<long>(std::ceil(h - 0.5 - 1e-9));
  std::vector<double> k;
  for (long i = -half; i <= half; ++i) {
    const double lo = std::max(static_cast<double>(i) - 0.5, -h);
    const double hi = std::min(static_cast<double>(i) + 0.5, h);
    k.push_back(std::max(hi - lo, 0.0));
  }
  const double s = std::accumulate(k.begin(), k.end(), 0.0);
  for (double& v : k) v /= s;
  return k;
}

std::vector<double> convolve_tophat(const std::vector<double>& values, const std::vector<double>& kernel) {
  const auto half = static_cast<long>(kernel.size() / 2);
  const auto n = static_cast<long>(values.size());
  const auto norm = normalisation(values.size(), kernel);
  std::vector<double> out(values.size(), 0.0);
  for (long i = 0; i < n; ++i) {
    double s = 0.0;
    for (long k = -half; k <= half; ++k) {
      const long j = i + k;
      if (j >= 0 && j < n) s += kernel[static_cast<std::size_t>(k + half)] * values[static_cast<std::size_t>(j)];
    }
    out[static_cast<std::size_t>(i)] = s / norm[static_cast<std::size_t>(i)];
  }
  return out;
}

DeconvolutionResult deconvolve(const ScanTrace& trace, const DeconvolutionOptions& opts) {
  trace.validate();
  if (opts.iterations < 1) fail_validation("invalid_config", "deconvolution needs at least one iteration");
  const auto kernel = tophat_kernel(trace.slit_width, trace.step);
  const auto& d = trace.values;
  const auto norm = normalisation(d.size(), kernel);
  const auto ht_one = correlate_tophat(std::vector<double>(d.size(), 1.0), kernel, norm);

  DeconvolutionResult res;
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
  std::vector<double> u(d.size(), mean);
  if (!(mean > 0.0)) {
    res.profile = {trace.positions, u};
    res.converged = true;
    return res;
  }
  std::vector<double> ratio(d.size());
  for (int it = 0; it < opts.iterations; ++it) {
    const auto hu = convolve_tophat(u, kernel);
    res.residual = relative_l2(hu, d);
    res.iterations = it;
    if (res.residual <= opts.residual_tolerance) {
      res.converged = true;
      break;
    }
    for (std::size_t i = 0; i < d.size(); ++i) ratio[i] = hu[i] > 0.0 ? d[i] / hu[i] : 0.0;
    const auto corr = correlate_tophat(ratio, kernel, norm);
    for (std::size_t i = 0; i < d.size(); ++i) u[i] *= corr[i] / ht_one[i];
    res.iterations = it + 1;
  }
  if (!res.converged) {
    res.residual = relative_l2(convolve_tophat(u, kernel), d);
    res.converged = res.residual <= opts.residual_tolerance;
  }
  res.profile = {trace.positions, std::move(u)};
  return res;
}

StitchReport stitch_scans(const std::vector<Profile1D>& scans, double min_overlap) {
  if (scans.empty()) fail_validation("invalid_profile", "no scans to stitch");
  for (const auto& s : scans) s.validate();
  const double h = scans.front().step();
  StitchReport rep;
  rep.composite = scans.front();
  rep.gains.push_back(1.0);
  std::vector<int> count(rep.composite.values.size(), 1);

  for (std::size_t n = 1; n < scans.size(); ++n) {
    const auto& s = scans[n];
    auto& c = rep.composite;
    if (std::abs(s.step() - h) > 1e-6 * h) fail_validation("grid_mismatch", "scans use different steps");
    const double shift = (s.positions.front() - c.positions.front()) / h;
    const double offset_f = std::round(shift);
    if (std::abs(shift - offset_f) > 1e-3) fail_validation("grid_mismatch", "scan positions are not on a common grid");
    if (offset_f < 0.0) fail_validation("unordered_scans", "scans must be ordered by start position");
    const auto offset = static_cast<std::size_t>(offset_f);
    if (offset >= c.values.size())
      fail_validation("insufficient_overlap", "scan " + std::to_string(n) + " does not overlap its predecessor");
    const std::size_t overlap = std::min(c.values.size() - offset, s.values.size());
    if (static_cast<double>(overlap - 1) * h < min_overlap * (1.0 - 1e-9) || overlap < 3)
      fail_validation("insufficient_overlap", "scan " + std::to_string(n) + " overlaps its predecessor by less than the minimum");

    // Peak of the composite inside the overlap; it must be interior.
    std::size_t m = 0;
    for (std::size_t k = 1; k < overlap; ++k)
      if (c.values[offset + k] > c.values[offset + m]) m = k;
    if (m == 0 || m + 1 == overlap || !(c.values[offset + m] > 0.0))
      fail_validation("no_peak_in_overlap", "no peak found in the overlap of scan " + std::to_string(n));
    const double half = 0.5 * c.values[offset + m];
    std::size_t lo = m, hi = m;
    while (lo > 0 && c.values[offset + lo - 1] >= half) --lo;
    while (hi + 1 < overlap && c.values[offset + hi + 1] >= half) ++hi;
    double acc = 0.0;
    int used = 0;
    for (std::size_t k = lo; k <= hi; ++k)
      if (s.values[k] > 0.0 && c.values[offset + k] > 0.0) {
        acc += std::log(c.values[offset + k]) - std::log(s.values[k]);
        ++used;
      }
    if (used == 0) fail_validation("no_peak_in_overlap", "scan " + std::to_string(n) + " is empty over the overlap peak");
    const double g = std::exp(acc / used);
    rep.gains.push_back(g);

    for (std::size_t k = 0; k < overlap; ++k) {
      auto& v = c.values[offset + k];
      auto& cnt = count[offset + k];
      v = (v * cnt + g * s.values[k]) / (cnt + 1);
      ++cnt;
    }
    for (std::size_t k = overlap; k < s.values.size(); ++k) {
      c.positions.push_back(c.positions.front() + static_cast<double>(offset + k) * h);
      c.values.push_back(g * s.values[k]);
      count.push_back(1);
    }
  }
  return rep;
}

std::pair<double, double> locate_peak(const Profile1D& profile, double hint, int search_steps) {
  profile.validate();
  const double h = profile.step();
  const auto n = static_cast<long>(profile.values.size());
  const long c = std::lround((hint - profile.positions.front()) / h);
  const long lo = std::max<long>(c - search_steps, 0);
  const long hi = std::min<long>(c + search_steps, n - 1);
  if (lo > hi) fail_validation("peak_not_found", "peak hint lies outside the profile");
  long m = lo;
  for (long k = lo; k <= hi; ++k)
    if (profile.values[static_cast<std::size_t>(k)] > profile.values[static_cast<std::size_t>(m)]) m = k;
  const auto& v = profile.values;
  const auto at = [&](long k) { return v[static_cast<std::size_t>(k)]; };
  if (m == 0 || m == n - 1 || at(m - 1) > at(m) || at(m + 1) > at(m) || !(at(m) > 0.0))
    fail_validation("peak_not_found", "no local maximum within the search window of the peak hint");
  const double a = at(m - 1), b = at(m), d = at(m + 1);
  const double den = a - 2.0 * b + d;
  double delta = 0.0, height = b;
  if (den < 0.0) {
    delta = 0.5 * (a - d) / den;
    height = b - 0.25 * (a - d) * delta;
  }
  return {profile.positions[static_cast<std::size_t>(m)] + delta * h, height};
}

CrosstalkReport extract_crosstalk(const Profile1D& profile, double peak_a, double peak_b, const ExtractOptions& opts) {
  profile.validate();
  if (opts.n_points < 2) fail_validation("window_too_small", "the window needs at least two points");
  const auto [pa, ha] = locate_peak(profile, peak_a, opts.search_steps);
  const auto [pb, hb] = locate_peak(profile, peak_b, opts.search_steps);
  (void)hb;
  const double left = std::min(pa, pb), right = std::max(pa, pb);
  const double h = profile.step();
  const double mid_index = (0.5 * (pa + pb) - profile.positions.front()) / h;
  const long start = std::lround(mid_index - 0.5 * static_cast<double>(opts.n_points - 1));
  const long stop = start + static_cast<long>(opts.n_points) - 1;
  if (start < 0 || stop >= static_cast<long>(profile.values.size()) ||
      !(profile.positions[static_cast<std::size_t>(start)] > left) ||
      !(profile.positions[static_cast<std::size_t>(stop)] < right))
    fail_validation("window_too_small", std::to_string(opts.n_points) + " points do not fit between the peaks");

  CrosstalkReport r;
  r.peak_position = pa;
  r.peak_height = ha;
  r.other_peak_position = pb;
  r.window = {profile.positions[static_cast<std::size_t>(start)], profile.positions[static_cast<std::size_t>(stop)]};
  r.n_window_points = opts.n_points;

  double mean = 0.0;
  for (long k = start; k <= stop; ++k) mean += profile.values[static_cast<std::size_t>(k)];
  mean /= static_cast<double>(opts.n_points);
  double var = 0.0;
  for (long k = start; k <= stop; ++k) var += std::pow(profile.values[static_cast<std::size_t>(k)] - mean, 2);
  var /= static_cast<double>(opts.n_points - 1);
  const double sem = std::sqrt(var / static_cast<double>(opts.n_points));

  const double floor_db =
      opts.noise_floor && *opts.noise_floor > 0.0
          ? std::max(10.0 * std::log10(*opts.noise_floor / ha), opts.numerical_floor_db)
          : opts.numerical_floor_db;
  const bool below_noise = opts.noise_floor && mean <= *opts.noise_floor;
  if (!(mean > 0.0) || below_noise || 10.0 * std::log10(mean / ha) < floor_db) {
    r.value_db = floor_db;
    r.uncertainty_db = 0.0;
    r.floor_limited = true;
    return r;
  }
  r.value_db = 10.0 * std::log10(mean / ha);
  r.uncertainty_db = 10.0 / std::log(10.0) * sem / mean;
  return r;
}

nlohmann::json report_to_json(const CrosstalkReport& r) {
  return {{"value_db", r.value_db},
          {"uncertainty_db", r.uncertainty_db},
          {"peak_position", r.peak_position},
          {"peak_height", r.peak_height},
          {"other_peak_position", r.other_peak_position},
          {"window", {r.window.first, r.window.second}},
          {"n_window_points", r.n_window_points},
          {"floor_limited", r.floor_limited}};
}

BackgroundRatio fiber_scan_background_ratio(const ScalarField2D& plane, std::pair<double, double> peak,
                                            const Rect& region, double exclusion_radius) {
  const auto& g = plane.grid();
  if (!(exclusion_radius > 0.0)) fail_validation("invalid_region", "exclusion radius must be positive");
  if (!(region.x1 > region.x0) || !(region.y1 > region.y0)) fail_validation("invalid_region", "empty background rectangle");
  const auto [px, py] = peak;
  const double cx = std::clamp(px, region.x0, region.x1);
  const double cy = std::clamp(py, region.y0, region.y1);
  if (std::hypot(cx - px, cy - py) < exclusion_radius)
    fail_validation("region_overlap", "background region intrudes on the exclusion radius around the peak");

  double peak_i = 0.0;
  double sum = 0.0, sum2 = 0.0;
  std::size_t n = 0;
  for (std::size_t j = 0; j < g.ny; ++j)
    for (std::size_t i = 0; i < g.nx; ++i) {
      const double x = g.x(i), y = g.y(j);
      const double v = plane.intensity(i, j);
      if (std::hypot(x - px, y - py) <= exclusion_radius) peak_i = std::max(peak_i, v);
      if (x >= region.x0 && x <= region.x1 && y >= region.y0 && y <= region.y1) {
        sum += v;
        sum2 += v * v;
        ++n;
      }
    }
  if (n < 2) fail_validation("invalid_region", "background rectangle holds fewer than two samples");
  if (!(peak_i > 0.0)) fail_validation("peak_not_found", "no signal near the peak position");
  BackgroundRatio r;
  r.n_points = n;
  const double mean = sum / static_cast<double>(n);
  if (!(mean > 0.0)) {
    r.value_db = -std::numeric_limits<double>::infinity();
    r.below_floor = true;
    return r;
  }
  const double var = std::max(0.0, (sum2 - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1));
  r.value_db = 10.0 * std::log10(mean / peak_i);
  r.uncertainty_db = 10.0 / std::log(10.0) * std::sqrt(var / static_cast<double>(n)) / mean;
  return r;
}

std::string sidecar_path_for(const std::string& csv_path) { return csv_path + ".json"; }

Profile1D read_profile_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_io("read_failed", "cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || trim(line) != "position_um,intensity")
    fail_io("bad_format", "'" + path + "' must start with header position_um,intensity");
  Profile1D p;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    char* end = nullptr;
    const std::string a = comma == std::string::npos ? line : line.substr(0, comma);
    const double x = std::strtod(a.c_str(), &end);
    bool ok = comma != std::string::npos && end && *end == '\0';
    const std::string b = ok ? line.substr(comma + 1) : std::string{};
    const double v = ok ? std::strtod(b.c_str(), &end) : 0.0;
    ok = ok && end && *end == '\0' && !b.empty();
    if (!ok) fail_io("bad_format", path + ":" + std::to_string(lineno) + ": expected two numbers");
    p.positions.push_back(x * 1e-6);
    p.values.push_back(v);
  }
  return p;
}

void write_profile_csv(const Profile1D& profile, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail_io("write_failed", "cannot write '" + path + "'");
  out.precision(12);
  out << "position_um,intensity\n";
  for (std::size_t k = 0; k < profile.values.size(); ++k) out << profile.positions[k] * 1e6 << ',' << profile.values[k] << '\n';
  if (!out) fail_io("write_failed", "error while writing '" + path + "'");
}

ScanTrace read_trace(const std::string& csv_path) { return read_trace(csv_path, sidecar_path_for(csv_path)); }

ScanTrace read_trace(const std::string& csv_path, const std::string& sidecar_path) {
  const auto p = read_profile_csv(csv_path);
  std::ifstream in(sidecar_path);
  if (!in) fail_io("read_failed", "cannot open sidecar '" + sidecar_path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail_io("bad_format", "sidecar '" + sidecar_path + "': " + e.what());
  }
  ScanTrace t;
  t.positions = p.positions;
  t.values = p.values;
  try {
    t.slit_width = j.at("slit_width_um").get<double>() * 1e-6;
    t.step = j.at("step_um").get<double>() * 1e-6;
    t.slit_height = j.value("slit_height_mm", 0.0) * 1e-3;
    t.modulation_hz = j.value("modulation_hz", 0.0);
    if (j.contains("noise_floor")) t.noise_floor = j["noise_floor"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail_io("bad_format", "sidecar '" + sidecar_path + "': " + e.what());
  }
  t.validate();
  return t;
}

void write_trace(const ScanTrace& trace, const std::string& csv_path) {
  write_profile_csv(trace.profile(), csv_path);
  nlohmann::json j{{"slit_width_um", trace.slit_width * 1e6},
                   {"step_um", trace.step * 1e6},
                   {"slit_height_mm", trace.slit_height * 1e3},
                   {"modulation_hz", trace.modulation_hz}};
  if (trace.noise_floor) j["noise_floor"] = *trace.noise_floor;
  std::ofstream out(sidecar_path_for(csv_path));
  if (!out) fail_io("write_failed", "cannot write sidecar for '" + csv_path + "'");
  out << j.dump(2) << '\n';
}

}  // namespace ionguide
