#include "dagan/features.hpp"

#include <unsupported/Eigen/FFT>

#include <complex>

namespace dagan {

int band_of(double freq_hz) {
  for (int b = 0; b < static_cast<int>(kBandCount); ++b) {
    const auto [lo, hi] = kBands[static_cast<std::size_t>(b)];
    const bool last = b + 1 == static_cast<int>(kBandCount);
    if (freq_hz >= lo && (freq_hz < hi || (last && freq_hz <= hi))) return b;
  }
  return -1;
}

std::array<double, kBandCount> band_energies(const Eigen::Ref<const RowVec>& signal,
                                             double sample_rate) {
  const Index n = signal.size();
  std::vector<double> in(signal.data(), signal.data() + n);
  std::vector<std::complex<double>> spectrum;
  Eigen::FFT<double> fft;
  fft.fwd(spectrum, in);

  std::array<double, kBandCount> energy{};
  const double norm = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
  for (Index k = 0; k < n; ++k) {
    const double folded = static_cast<double>(std::min(k, n - k));
    const int band = band_of(folded * sample_rate / static_cast<double>(n));
    if (band >= 0) energy[static_cast<std::size_t>(band)] += std::norm(spectrum[static_cast<std::size_t>(k)]) * norm;
  }
  return energy;
}

Vec extract_features(const Eigen::Ref<const Mat>& window, const std::vector<Index>& channels) {
  if (window.cols() < 2)
    throw DimensionError("extract_features needs at least 2 frames, got " + std::to_string(window.cols()));
  Index physio = 0;
  for (Index c : channels) {
    if (c < 0 || c >= window.rows()) throw DimensionError("extract_features: channel out of range");
    if (is_physiological(c)) ++physio;
  }
  Vec out(feature_dimension(static_cast<Index>(channels.size()), physio));
  Index at = 0;
  for (Index c : channels) {
    const auto row = window.row(c);
    const double mean = row.mean();
    out(at++) = row.maxCoeff();
    out(at++) = row.minCoeff();
    out(at++) = mean;
    out(at++) = std::sqrt((row.array() - mean).square().mean());
  }
  for (Index c : channels) {
    if (!is_physiological(c)) continue;
    const RowVec row = window.row(c);
    for (double e : band_energies(row)) out(at++) = e;
  }
  return out;
}

FeatureVector51 extract_features(const Eigen::Ref<const Mat>& window) {
  if (window.rows() != kChannelCount)
    throw DimensionError("the 51-dimensional feature vector needs all 9 channels");
  std::vector<Index> all(kChannelCount);
  for (Index c = 0; c < kChannelCount; ++c) all[static_cast<std::size_t>(c)] = c;
  return extract_features(window, all);
}

std::vector<std::string> feature_names() {
  std::vector<std::string> names;
  for (auto ch : kChannelNames)
    for (const char* stat : {"max", "min", "mean", "std"}) names.push_back(std::string(ch) + "_" + stat);
  for (Index c = 0; c < kChannelCount; ++c)
    if (is_physiological(c))
      for (Index b = 0; b < kBandCount; ++b)
        names.push_back(std::string(kChannelNames[static_cast<std::size_t>(c)]) + "_band" + std::to_string(b + 1));
  return names;
}

}  // namespace dagan
