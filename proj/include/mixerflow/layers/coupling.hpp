#pragma once

#include <cstddef>
#include <memory>

#include "mixerflow/flow/bijection.hpp"
#include "mixerflow/layers/conditioner.hpp"

namespace mixerflow {

/// exp: S = exp(s_raw). bounded: S = sigmoid(s_raw + 2), so 0 < S < 1.
enum class ScaleLaw { exp, bounded };

/// Affine coupling over rows of [b, n, k]. The first d = floor(k/2) coordinates are
/// transformed, y_d = S ⊙ x_d + T, with (s_raw, T) predicted from the remaining k − d.
class AffineCoupling : public Bijection {
 public:
  /// The conditioner must map k − d inputs to 2d outputs (s_raw first, then T).
  AffineCoupling(std::string path, std::size_t width, ScaleLaw law, std::unique_ptr<Conditioner> conditioner);

  FlowResult forward(const Tensor& x) override;
  Tensor inverse(const Tensor& z) override;

  std::size_t split() const { return split_; }
  Conditioner& conditioner() { return *conditioner_; }

 private:
  struct Params {
    Tensor log_scale;  // log S per transformed coordinate
    Tensor scale;
    Tensor shift;
  };
  Params params(const Tensor& untouched, bool update_statistics, bool inverting);

  std::size_t width_;
  std::size_t split_;
  ScaleLaw law_;
  Conditioner* conditioner_;
};

std::unique_ptr<AffineCoupling> make_affine_coupling(const std::string& path, std::size_t width, ScaleLaw law,
                                                     const ConditionerOptions& options, Rng& rng);

/// Largest s_raw an exp-law layer accepts before reporting overflow.
inline constexpr double kMaxRawScale = 80.0;

/// Throws NumericError naming `layer` if any element of `s_raw` exceeds kMaxRawScale.
void check_raw_scale(const Tensor& s_raw, const std::string& layer, double sign = 1.0);

}  // namespace mixerflow
