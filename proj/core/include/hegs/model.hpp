#pragma once

#include "hegs/decoder.hpp"

namespace hegs {

struct ModelConfig {
    BackboneConfig backbone;
    NeckConfig neck;
    DecoderConfig decoder;

    void validate() const {
        backbone.validate();
        neck.validate();
        decoder.validate();
        HEGS_CHECK(neck.hidden_dim == decoder.hidden_dim,
                   "neck and decoder hidden dims must match");
    }
};

namespace nn {

class HegsDetr : public Module {
public:
    HegsDetr() = default;
    HegsDetr(const ModelConfig& cfg, uint64_t seed);

    struct EncoderOut {
        PyramidFeatures pyramid;
        EncoderMemory memory;
        QuerySelector::Result selection;
    };
    // images: (N,3,H,W) at stride 1
    EncoderOut encode(const Tensor& images, bool capture_attention = false) const;

    ModelConfig cfg;
    Hfesnet backbone;
    Esop neck;
    Decoder decoder;

protected:
    void visit_children(const ChildVisitor& fn) override {
        fn("backbone", backbone);
        fn("neck", neck);
        fn("decoder", decoder);
    }
};

} // namespace nn
} // namespace hegs
