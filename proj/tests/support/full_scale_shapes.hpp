#pragma once

#include "sanet/config.hpp"
#include "sanet/models.hpp"

namespace sanet::testing {

struct FullScaleShapes {
  Shape encoded, decoded, combined, output, classifier_map, gender_out;
};

// One untrained forward pass of the generator and the gender classifier at 224x224.
inline FullScaleShapes full_scale_shapes() {
  Config c;
  c.image_size = 224;
  const auto ae = init_autoencoder(AutoencoderArch::from_config(c), 1);
  const auto x = Tensor::full({1, 1, 224, 224}, 0.5f);
  const auto proto = Tensor::full({1, 3, 224, 224}, 0.4f);
  const auto trace = autoencoder_forward(ae.store, ae.arch, x, proto, proto);
  const auto clf = init_gender_classifier(ClassifierArch::auxiliary_from_config(c), 2);
  return {trace.encoded.shape(),
          trace.decoded.shape(),
          trace.combined.shape(),
          trace.output.shape(),
          trunk_forward(clf.store, clf.arch, x).shape(),
          gender_forward_batch(clf.store, clf.arch, x).shape()};
}

}  // namespace sanet::testing
