#include "hegs/model.hpp"

namespace hegs::nn {

HegsDetr::HegsDetr(const ModelConfig& config, uint64_t seed) : cfg(config) {
    cfg.validate();
    Rng rng(Rng::derive(seed, /*stream=*/0xA0DE1));
    backbone = Hfesnet(cfg.backbone, rng);
    neck = Esop(cfg.backbone, cfg.neck, rng);
    decoder = Decoder(cfg.decoder, rng);
}

HegsDetr::EncoderOut HegsDetr::encode(const Tensor& images, bool capture_attention) const {
    EncoderOut out;
    out.pyramid = backbone.forward(FeatureMap{images, 1});
    out.memory = neck.forward(out.pyramid, capture_attention);
    out.selection = decoder.selector.forward(out.memory, cfg.decoder.num_queries);
    return out;
}

} // namespace hegs::nn
