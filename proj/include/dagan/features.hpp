#pragma once

#include "dagan/data.hpp"
#include "dagan/tensor.hpp"

#include <array>
#include <string>
#include <vector>

namespace dagan {

inline constexpr Index kBandCount = 5;
inline constexpr Index kFeatureDim = 51;

/// Spectral bands in Hz, lower-inclusive / upper-exclusive. The last band is
/// closed at the Nyquist frequency of the 30 Hz stream.
inline constexpr std::array<std::pair<double, double>, kBandCount> kBands = {{
    {0.0, 0.04}, {0.04, 0.15}, {0.15, 0.5}, {0.5, 4.0}, {4.0, 15.0}}};

using FeatureVector51 = Eigen::Matrix<double, kFeatureDim, 1>;

/// 4 time-domain statistics per channel plus 5 band energies per physiological channel.
constexpr Index feature_dimension(Index channel_count = kChannelCount, Index physio_count = 3) {
  return 4 * channel_count + kBandCount * physio_count;
}

/// Band index of a bin at `freq_hz`, or -1 when it falls outside every band.
int band_of(double freq_hz);

/// Energy of a real signal in each band: sum over DFT bins k (both halves of
/// the spectrum, folded to |f|) of |X_k|^2 / N^2. The five values sum to the
/// mean-square power of the signal.
std::array<double, kBandCount> band_energies(const Eigen::Ref<const RowVec>& signal,
                                             double sample_rate = kSampleRate);

/// Feature vector for the selected rows of a channels x N window. Layout:
/// [max, min, mean, std] for every selected channel in order, then the five
/// band energies of every selected physiological channel in order.
/// `channels` index the canonical nine-channel order.
Vec extract_features(const Eigen::Ref<const Mat>& window, const std::vector<Index>& channels);

/// The 51-dimensional vector of a full nine-channel window.
FeatureVector51 extract_features(const Eigen::Ref<const Mat>& window);

/// Column names of the 51-dimensional layout, e.g. "speed_max", "hr_band3".
std::vector<std::string> feature_names();

/// Stacks features of many windows into rows.
template <typename WindowRange, typename Extract>
Mat feature_matrix(const WindowRange& windows, Index dim, Extract&& extract) {
  Mat out(static_cast<Index>(std::size(windows)), dim);
  Index r = 0;
  for (const auto& w : windows) out.row(r++) = extract(w).transpose();
  return out;
}

}  // namespace dagan
