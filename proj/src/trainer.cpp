#include "omoq/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "omoq/csv.hpp"
#include "omoq/errors.hpp"

namespace omoq {

namespace {

constexpr uint32_t kStreamShuffle = 1;
constexpr uint32_t kStreamSegments = 2;
constexpr uint32_t kStreamDropout = 3;

struct SplitSet {
    std::vector<size_t> train, val, test;
};

// Evaluates one split in eval mode; returns OMOS estimates on [1, 5].
std::vector<double> eval_estimates(ModelBundle& bundle, const TrainConfig& cfg,
                                   const std::vector<const FeatureMatrix*>& feats,
                                   size_t l_min, size_t l_max, size_t chunk) {
    std::vector<double> est;
    est.reserve(feats.size());
    for (size_t begin = 0; begin < feats.size(); begin += chunk) {
        const size_t end = std::min(feats.size(), begin + chunk);
        Graph<float> g;
        g.recording = false;
        g.training = false;
        if (bundle.family == ModelFamily::cnn) {
            // All windows of the chunk share one forward pass; per-clip score
            // is the mean over its eval_segments windows.
            std::vector<FeatureMatrix> windows;
            windows.reserve((end - begin) * bundle.eval_segments);
            for (size_t i = begin; i < end; ++i) {
                auto segs = eval_segments(*feats[i], bundle.l_min, bundle.eval_segments);
                for (auto& s : segs) windows.push_back(std::move(s));
            }
            std::vector<const FeatureMatrix*> ptrs;
            ptrs.reserve(windows.size());
            for (const auto& w : windows) ptrs.push_back(&w);
            const auto panes = make_panes<float>(ptrs, bundle.cnn_spec.input_channels);
            const auto scores = bundle.cnn->forward(g, panes);
            for (size_t i = 0; i < end - begin; ++i) {
                double acc = 0.0;
                for (size_t s = 0; s < bundle.eval_segments; ++s)
                    acc += static_cast<double>(
                        scores.value().data[i * bundle.eval_segments + s]);
                est.push_back(rescale_omos(acc / static_cast<double>(bundle.eval_segments)));
            }
        } else {
            const bool repeat = cfg.policy == SegmentPolicy::repeat_to_max &&
                                bundle.family == ModelFamily::rnn_ft;
            std::vector<FeatureMatrix> repeated;
            std::vector<const FeatureMatrix*> ptrs;
            for (size_t i = begin; i < end; ++i) {
                if (repeat)
                    repeated.push_back(repeat_to_length(*feats[i], l_max));
                else
                    ptrs.push_back(feats[i]);
            }
            for (const auto& r : repeated) ptrs.push_back(&r);
            const auto batch = make_sequence_batch<float>(ptrs);
            if (bundle.family == ModelFamily::rnn_ff) {
                const auto scores = bundle.ff->forward(g, batch);
                for (size_t i = 0; i < ptrs.size(); ++i)
                    est.push_back(rescale_omos(static_cast<double>(scores.value().data[i])));
            } else {
                auto out = bundle.ft->forward(g, batch);
                const auto collapsed = bundle.ft->collapse(out, bundle.ft_spec.collapse);
                for (double v : collapsed) est.push_back(rescale_omos(v));
            }
        }
        (void)l_min;
    }
    return est;
}

struct SplitEval {
    double rmse15 = 0.0;
    double rho = 0.0;
};

SplitEval eval_split(ModelBundle& bundle, const TrainConfig& cfg,
                     const std::vector<const FeatureMatrix*>& feats,
                     const std::vector<double>& targets15, size_t l_min, size_t l_max,
                     size_t chunk) {
    const auto est = eval_estimates(bundle, cfg, feats, l_min, l_max, chunk);
    SplitEval out;
    out.rmse15 = rmse(est, targets15);
    out.rho = pearson_or(est, targets15, 0.0);
    return out;
}

size_t default_epochs(ModelFamily f) { return f == ModelFamily::cnn ? 100 : 60; }
size_t default_batch(ModelFamily f) { return f == ModelFamily::cnn ? 132 : 48; }

} // namespace

TrainResult train_model(Manifest manifest, FeatureProvider& provider, const TrainConfig& cfg) {
    TrainConfig c = cfg;
    if (c.epochs == 0) c.epochs = default_epochs(c.family);
    if (c.batch_size == 0) c.batch_size = default_batch(c.family);
    if (c.eval_chunk == 0) c.eval_chunk = c.family == ModelFamily::cnn ? 8 : 64;
    require(c.lr > 0.0, "train: lr must be positive");

    manifest.derive_val_split(c.seed, c.val_fraction);
    SplitSet split{manifest.split_indices("train"), manifest.split_indices("val"),
                   manifest.split_indices("test")};
    require(!split.train.empty(), "train: no training rows in manifest");

    // Features for every row; standardization stats come from train rows only.
    std::vector<const FeatureMatrix*> raw(manifest.rows.size());
    for (size_t i = 0; i < manifest.rows.size(); ++i)
        raw[i] = &provider.get(manifest.rows[i].path);

    FeatureStats stats;
    if (c.standardize != StandardizeMode::none) {
        std::vector<const FeatureMatrix*> train_feats;
        for (size_t i : split.train) train_feats.push_back(raw[i]);
        stats = compute_feature_stats(train_feats, c.standardize);
    }
    std::vector<FeatureMatrix> standardized;
    std::vector<const FeatureMatrix*> feats(manifest.rows.size());
    if (c.standardize != StandardizeMode::none) {
        standardized.reserve(manifest.rows.size());
        for (size_t i = 0; i < manifest.rows.size(); ++i) {
            standardized.push_back(standardize(*raw[i], stats));
            feats[i] = &standardized.back();
        }
    } else {
        feats = raw;
    }

    size_t l_min = feats[0]->frames, l_max = feats[0]->frames;
    const size_t feat_dim = feats[0]->dim;
    for (const auto* f : feats) {
        l_min = std::min(l_min, f->frames);
        l_max = std::max(l_max, f->frames);
        require(f->dim == feat_dim, "train: inconsistent feature dims across files");
    }

    // Scaled targets for loss; [1,5] targets for reported metrics.
    std::vector<float> target01(manifest.rows.size());
    std::vector<double> target15(manifest.rows.size());
    for (size_t i = 0; i < manifest.rows.size(); ++i) {
        target01[i] = static_cast<float>(scale_target(manifest.rows[i].smos));
        target15[i] = manifest.rows[i].smos;
    }
    auto targets_of = [&](const std::vector<size_t>& idx) {
        std::vector<double> t;
        for (size_t i : idx) t.push_back(target15[i]);
        return t;
    };
    auto feats_of = [&](const std::vector<size_t>& idx) {
        std::vector<const FeatureMatrix*> f;
        for (size_t i : idx) f.push_back(feats[i]);
        return f;
    };

    auto build_bundle = [&]() {
        CnnSpec cnn_spec;
        RnnFfSpec ff_spec;
        RnnFtSpec ft_spec;
        cnn_spec.dropout = c.dropout;
        cnn_spec.input_channels = c.cnn_channels;
        require(feat_dim % c.cnn_channels == 0, "train: feature dim not divisible by pane channels");
        cnn_spec.input_height = feat_dim / c.cnn_channels;
        cnn_spec.input_width = l_min;
        ff_spec.cell = c.cell;
        ff_spec.directions = c.directions;
        ff_spec.feature_dim = feat_dim;
        ff_spec.hidden = c.hidden_override;
        ff_spec.dropout = c.dropout;
        ft_spec.directions = c.directions;
        ft_spec.feature_dim = feat_dim;
        if (c.hidden_override) ft_spec.hidden = c.hidden_override;
        ft_spec.dropout = c.dropout;
        ft_spec.collapse = c.collapse;
        auto b = ModelBundle::create(c.family, cnn_spec, ff_spec, ft_spec, c.seed);
        b.feature_kind = provider.kind();
        b.n_mfcc = provider.config().n_mfcc;
        b.stats = stats;
        b.l_min = l_min;
        b.eval_segments = c.eval_segments;
        return b;
    };

    if (!c.out_dir.empty()) std::filesystem::create_directories(c.out_dir);

    TrainResult result;
    double lr_now = c.lr;
    bool fallback_done = false;

restart:
    auto bundle = build_bundle();
    auto named = bundle.params();
    std::vector<Var<float>> params;
    for (auto& p : named) params.push_back(p.var);
    typename AdamW<float>::Config opt_cfg;
    opt_cfg.lr = static_cast<float>(lr_now);
    opt_cfg.weight_decay = static_cast<float>(c.weight_decay);
    AdamW<float> opt(params, opt_cfg);

    result.epochs.clear();
    result.best_dist = 0.0;
    result.best_epoch = 0;

    for (uint32_t epoch = 1; epoch <= c.epochs; ++epoch) {
        Rng rng_shuffle = Rng::stream(c.seed, epoch, kStreamShuffle);
        Rng rng_segments = Rng::stream(c.seed, epoch, kStreamSegments);
        Rng rng_dropout = Rng::stream(c.seed, epoch, kStreamDropout);

        std::vector<size_t> order = split.train;
        rng_shuffle.shuffle(order.begin(), order.end());

        double loss_sum = 0.0;
        size_t batches = 0;
        for (size_t begin = 0; begin < order.size(); begin += c.batch_size) {
            const size_t end = std::min(order.size(), begin + c.batch_size);
            Graph<float> g;
            g.training = true;
            g.rng = &rng_dropout;

            Var<float> loss;
            if (c.family == ModelFamily::cnn) {
                std::vector<FeatureMatrix> segs;
                segs.reserve(end - begin);
                for (size_t i = begin; i < end; ++i)
                    segs.push_back(random_segment(*feats[order[i]], l_min, rng_segments));
                std::vector<const FeatureMatrix*> ptrs;
                for (const auto& s : segs) ptrs.push_back(&s);
                const auto panes = make_panes<float>(ptrs, c.cnn_channels);
                const auto scores = bundle.cnn->forward(g, panes);
                Array<float> tgt({end - begin, 1});
                for (size_t i = begin; i < end; ++i) tgt.data[i - begin] = target01[order[i]];
                loss = rmse_loss(g, scores, constant(tgt));
            } else if (c.family == ModelFamily::rnn_ff) {
                std::vector<const FeatureMatrix*> ptrs;
                for (size_t i = begin; i < end; ++i) ptrs.push_back(feats[order[i]]);
                const auto batch = make_sequence_batch<float>(ptrs);
                const auto scores = bundle.ff->forward(g, batch);
                Array<float> tgt({end - begin, 1});
                for (size_t i = begin; i < end; ++i) tgt.data[i - begin] = target01[order[i]];
                loss = rmse_loss(g, scores, constant(tgt));
            } else {
                std::vector<FeatureMatrix> prepared;
                std::vector<const FeatureMatrix*> ptrs;
                for (size_t i = begin; i < end; ++i) {
                    const auto* f = feats[order[i]];
                    if (c.policy == SegmentPolicy::repeat_to_max) {
                        prepared.push_back(repeat_to_length(*f, l_max));
                    } else if (c.policy == SegmentPolicy::truncate_random) {
                        prepared.push_back(random_segment(*f, l_min, rng_segments));
                    } else {
                        ptrs.push_back(f);
                    }
                }
                for (const auto& p : prepared) ptrs.push_back(&p);
                const auto batch = make_sequence_batch<float>(ptrs);
                auto out = bundle.ft->forward(g, batch);
                Array<float> tgt({out.steps * out.batch, 1});
                for (size_t t = 0; t < out.steps; ++t)
                    for (size_t b = 0; b < out.batch; ++b)
                        tgt.data[t * out.batch + b] = target01[order[begin + b]];
                loss = masked_mse_loss(g, out.frame_scores, constant(tgt), out.flat_mask);
            }

            const double loss_v = static_cast<double>(loss.value().data[0]);
            if (!std::isfinite(loss_v))
                fail("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                     std::to_string(batches) + " (lr=" + std::to_string(lr_now) +
                     ", seed=" + std::to_string(c.seed) + ")");
            loss_sum += loss_v;
            ++batches;

            g.backward(loss);
            opt.step();
            opt.zero_grad();
        }

        // Per-epoch metrics on all three splits, reported on the [1,5] scale.
        const auto tr = eval_split(bundle, c, feats_of(split.train), targets_of(split.train),
                                   l_min, l_max, c.eval_chunk);
        SplitEval va = tr, te;
        if (!split.val.empty())
            va = eval_split(bundle, c, feats_of(split.val), targets_of(split.val), l_min, l_max,
                            c.eval_chunk);
        te = va;
        if (!split.test.empty())
            te = eval_split(bundle, c, feats_of(split.test), targets_of(split.test), l_min, l_max,
                            c.eval_chunk);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.metrics.rho = {tr.rho, va.rho, te.rho};
        rec.metrics.rmse = {tr.rmse15, va.rmse15, te.rmse15};
        rec.dist = overall_distance(rec.metrics);
        rec.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
        result.epochs.push_back(rec);

        if (!c.quiet)
            std::fprintf(stderr,
                         "[seed %u] epoch %u/%zu  loss %.5f  L=[%.4f %.4f %.4f]  "
                         "rho=[%.4f %.4f %.4f]  D=%.5f\n",
                         c.seed, epoch, c.epochs, rec.train_loss, tr.rmse15, va.rmse15, te.rmse15,
                         tr.rho, va.rho, te.rho, rec.dist);

        if (result.best_epoch == 0 || rec.dist < result.best_dist) {
            result.best_epoch = epoch;
            result.best_dist = rec.dist;
            result.best_metrics = rec.metrics;
            if (!c.out_dir.empty()) {
                bundle.epoch = epoch;
                result.best_checkpoint = c.out_dir + "/best.ckpt";
                save_bundle(result.best_checkpoint, bundle);
            }
        }

        // Learning-rate fallback: no validation improvement over the first
        // 10 epochs restarts the run once at 1e-5.
        if (c.lr_fallback && !fallback_done && epoch == 10 && c.epochs > 10) {
            double best_val = result.epochs[0].metrics.rmse[1];
            for (const auto& r : result.epochs) best_val = std::min(best_val, r.metrics.rmse[1]);
            if (best_val >= result.epochs[0].metrics.rmse[1]) {
                fallback_done = true;
                result.lr_fallback_triggered = true;
                lr_now = 1e-5;
                if (!c.quiet)
                    std::fprintf(stderr, "[seed %u] validation stalled; restarting with lr=1e-5\n",
                                 c.seed);
                goto restart;
            }
        }
    }

    if (c.save_final && !c.out_dir.empty()) {
        bundle.epoch = static_cast<uint32_t>(c.epochs);
        save_bundle(c.out_dir + "/final.ckpt", bundle);
    }

    if (!c.out_dir.empty()) {
        result.metrics_csv = c.out_dir + "/metrics.csv";
        csv::Writer mw(result.metrics_csv);
        mw.row({"epoch", "split", "rmse_15", "pearson"});
        const char* names[3] = {"train", "val", "test"};
        for (const auto& r : result.epochs)
            for (int s = 0; s < 3; ++s)
                mw.row({std::to_string(r.epoch), names[s], csv::format_double(r.metrics.rmse[s]),
                        csv::format_double(r.metrics.rho[s])});

        result.selection_csv = c.out_dir + "/selection.csv";
        csv::Writer sw(result.selection_csv);
        sw.row({"seed", "epoch", "rho_tr", "rho_val", "rho_te", "L_tr", "L_val", "L_te", "D"});
        for (const auto& r : result.epochs)
            sw.row({std::to_string(c.seed), std::to_string(r.epoch),
                    csv::format_double(r.metrics.rho[0]), csv::format_double(r.metrics.rho[1]),
                    csv::format_double(r.metrics.rho[2]), csv::format_double(r.metrics.rmse[0]),
                    csv::format_double(r.metrics.rmse[1]), csv::format_double(r.metrics.rmse[2]),
                    csv::format_double(r.dist)});
    }
    return result;
}

double predict_clip(ModelBundle& bundle, const FeatureMatrix& raw_features) {
    require(raw_features.kind == bundle.feature_kind,
            std::string("predict: feature kind mismatch: checkpoint expects ") +
                feature_kind_name(bundle.feature_kind) + ", got " +
                feature_kind_name(raw_features.kind));
    const FeatureMatrix feat = standardize(raw_features, bundle.stats);
    Graph<float> g;
    g.recording = false;
    g.training = false;
    if (bundle.family == ModelFamily::cnn) {
        if (feat.frames < bundle.l_min)
            fail("predict: clip too short for the trained segment length (" +
                 std::to_string(feat.frames) + " < " + std::to_string(bundle.l_min) + " frames)");
        const auto segs = eval_segments(feat, bundle.l_min, bundle.eval_segments);
        std::vector<const FeatureMatrix*> ptrs;
        for (const auto& s : segs) ptrs.push_back(&s);
        const auto panes = make_panes<float>(ptrs, bundle.cnn_spec.input_channels);
        const auto scores = bundle.cnn->forward(g, panes);
        double acc = 0.0;
        for (size_t i = 0; i < segs.size(); ++i) acc += static_cast<double>(scores.value().data[i]);
        return rescale_omos(acc / static_cast<double>(segs.size()));
    }
    std::vector<const FeatureMatrix*> ptrs{&feat};
    const auto batch = make_sequence_batch<float>(ptrs);
    if (bundle.family == ModelFamily::rnn_ff) {
        const auto scores = bundle.ff->forward(g, batch);
        return rescale_omos(static_cast<double>(scores.value().data[0]));
    }
    auto out = bundle.ft->forward(g, batch);
    return rescale_omos(bundle.ft->collapse(out, bundle.ft_spec.collapse)[0]);
}

double predict_wav(ModelBundle& bundle, const std::string& wav_path, const TrimConfig& trim) {
    const AudioClip clip = load_clip(wav_path, trim);
    FeatureConfig fc;
    fc.n_mfcc = bundle.n_mfcc;
    const auto feat = compute_features(clip, bundle.feature_kind, fc);
    return predict_clip(bundle, feat);
}

} // namespace omoq
