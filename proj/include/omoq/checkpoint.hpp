#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "omoq/models.hpp"

namespace omoq {

// On-disk container: magic "OMOQCKPT", u32 format version, UTF-8 metadata
// block (JSON: model family, architecture fields, feature kind,
// standardization stats, seed, epoch), then named float32 arrays with shape
// headers, little-endian. Load followed by save reproduces identical bytes.
struct Checkpoint {
    std::string meta_json;
    std::vector<std::pair<std::string, Array<float>>> arrays;
};

void save_checkpoint_file(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint_file(const std::string& path);

// One trained (or trainable) float model plus everything inference needs.
struct ModelBundle {
    ModelFamily family = ModelFamily::rnn_ft;
    CnnSpec cnn_spec;
    RnnFfSpec ff_spec;
    RnnFtSpec ft_spec;
    std::unique_ptr<CnnModel<float>> cnn;
    std::unique_ptr<RnnFfModel<float>> ff;
    std::unique_ptr<RnnFtModel<float>> ft;

    FeatureKind feature_kind = FeatureKind::mfcc_d;
    FeatureStats stats; // standardization stats from the training split
    uint32_t seed = 0;
    uint32_t epoch = 0;
    size_t l_min = 0;         // CNN segment length the model was trained with
    size_t eval_segments = 16;
    size_t n_mfcc = 128;

    static ModelBundle create(ModelFamily family, const CnnSpec& cnn_spec,
                              const RnnFfSpec& ff_spec, const RnnFtSpec& ft_spec, uint32_t seed);

    std::vector<NamedParam<float>> params();
    std::vector<NamedState<float>> state();
};

Checkpoint bundle_to_checkpoint(ModelBundle& bundle);
ModelBundle bundle_from_checkpoint(const Checkpoint& ckpt);

void save_bundle(const std::string& path, ModelBundle& bundle);
ModelBundle load_bundle(const std::string& path);

} // namespace omoq
