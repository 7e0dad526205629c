#pragma once

#include "aural/codec.hpp"
#include "aural/config.hpp"
#include "aural/model.hpp"
#include "aural/trainer.hpp"

namespace aural {

// Flat-config keys -> typed configurations, with toy defaults. Every key can
// be overridden by a UA2_-prefixed environment variable.
BackboneConfig backbone_config_from(const Config& cfg);
StageSpec stage_spec_from(const Config& cfg, int stage);
CodecConfig codec_config_from(const Config& cfg);

}  // namespace aural
