#pragma once

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "omoq/features.hpp"
#include "omoq/nn.hpp"

namespace omoq {

enum class ModelFamily { cnn, rnn_ff, rnn_ft };
enum class CellType { gru, lstm };
enum class Collapse { mean, median, min, max };

const char* model_family_name(ModelFamily f);
const char* cell_type_name(CellType c);
const char* collapse_name(Collapse c);
ModelFamily model_family_from_name(const std::string& s);
CellType cell_type_from_name(const std::string& s);
Collapse collapse_from_name(const std::string& s);

// Conv stack 16/32/64/32 (5x5 then 3x3 kernels), max-pool after the first two
// blocks, batch norm per conv, then three 128-wide FC layers with identity
// skips around the second and third, and a sigmoid scalar head.
struct CnnSpec {
    std::vector<size_t> channels{16, 32, 64, 32};
    std::vector<size_t> kernels{5, 3, 3, 3};
    std::vector<bool> pool_after{true, true, false, false};
    double dropout = 0.10;
    std::vector<size_t> fc_sizes{128, 128, 128};
    size_t input_channels = 1; // 1 = feature-stacked pane, 2 = per-block channels
    size_t input_height = 256; // feature dimension per channel
    size_t input_width = 53;   // frames per segment (dataset minimum length)
};

// Final-frame recurrent model: 2 recurrent layers, final state into a
// 256/128/1 FCNN with layer norm + ReLU, sigmoid output.
struct RnnFfSpec {
    CellType cell = CellType::gru;
    size_t directions = 2;
    size_t layers = 2;
    size_t feature_dim = 256;
    size_t hidden = 0; // 0 -> directions * feature_dim
    double dropout = 0.10;
    std::vector<size_t> fc_sizes{256, 128};

    size_t hidden_size() const { return hidden ? hidden : directions * feature_dim; }
};

// Frame-target GRU model: per-frame sigmoid scores, loss on every valid
// frame, scores collapsed to one value per clip.
struct RnnFtSpec {
    size_t directions = 2;
    size_t layers = 2;
    size_t feature_dim = 256;
    size_t hidden = 256;
    double dropout = 0.10;
    Collapse collapse = Collapse::mean;
};

// Zero-padded batch of sequences; masks mark valid frames.
template <typename T>
struct SequenceBatch {
    std::vector<Array<T>> frames; // steps() entries of [B, D]
    std::vector<Array<T>> masks;  // steps() entries of [B], 1 = valid
    std::vector<size_t> lengths;  // per-clip frame counts

    size_t steps() const { return frames.size(); }
    size_t batch() const { return lengths.size(); }
    size_t dim() const { return frames.empty() ? 0 : frames[0].dim(1); }
};

template <typename T>
SequenceBatch<T> make_sequence_batch(const std::vector<const FeatureMatrix*>& feats) {
    require(!feats.empty(), "batch: no clips");
    SequenceBatch<T> b;
    const size_t bsz = feats.size(), dim = feats[0]->dim;
    size_t max_len = 0;
    for (const auto* f : feats) {
        require(f->dim == dim, "batch: feature dim mismatch across clips");
        require(f->frames >= 1, "batch: empty clip");
        b.lengths.push_back(f->frames);
        max_len = std::max(max_len, f->frames);
    }
    b.frames.reserve(max_len);
    b.masks.reserve(max_len);
    for (size_t t = 0; t < max_len; ++t) {
        Array<T> x({bsz, dim});
        Array<T> m({bsz});
        for (size_t i = 0; i < bsz; ++i) {
            if (t < feats[i]->frames) {
                const float* src = feats[i]->data.data() + t * dim;
                for (size_t d = 0; d < dim; ++d) x.data[i * dim + d] = static_cast<T>(src[d]);
                m.data[i] = T(1);
            }
        }
        b.frames.push_back(std::move(x));
        b.masks.push_back(std::move(m));
    }
    return b;
}

// CNN input panes [B, C, D/C, L]; pane[c][d][t] = feat(t, c*D/C + d).
template <typename T>
Array<T> make_panes(const std::vector<const FeatureMatrix*>& segs, size_t in_channels) {
    require(!segs.empty(), "panes: no segments");
    const size_t bsz = segs.size(), frames = segs[0]->frames, dim = segs[0]->dim;
    require(dim % in_channels == 0, "panes: feature dim not divisible by channel count");
    const size_t height = dim / in_channels;
    Array<T> panes({bsz, in_channels, height, frames});
    for (size_t s = 0; s < bsz; ++s) {
        require(segs[s]->frames == frames && segs[s]->dim == dim, "panes: segment shape mismatch");
        for (size_t c = 0; c < in_channels; ++c)
            for (size_t d = 0; d < height; ++d)
                for (size_t t = 0; t < frames; ++t)
                    panes.data[((s * in_channels + c) * height + d) * frames + t] =
                        static_cast<T>(segs[s]->at(t, c * height + d));
    }
    return panes;
}

// ---- recurrent stack shared by the FF and FT models ----

template <typename T>
struct RnnStack {
    struct DirParams {
        Var<T> w_ih, w_hh, b_ih, b_hh;
    };
    CellType cell = CellType::gru;
    size_t layers = 2, directions = 2, input_dim = 0, hidden = 0;
    std::vector<std::vector<DirParams>> p; // [layer][direction]

    RnnStack() = default;
    RnnStack(Rng& rng, CellType cell_, size_t layers_, size_t directions_, size_t input_dim_,
             size_t hidden_)
        : cell(cell_), layers(layers_), directions(directions_), input_dim(input_dim_),
          hidden(hidden_) {
        require(layers >= 1 && hidden >= 1 && input_dim >= 1, "rnn: bad dimensions");
        require(directions == 1 || directions == 2, "rnn: directions must be 1 or 2");
        const size_t gate_rows = (cell == CellType::gru ? 3 : 4) * hidden;
        p.resize(layers);
        for (size_t l = 0; l < layers; ++l) {
            const size_t in_dim = l == 0 ? input_dim : directions * hidden;
            for (size_t d = 0; d < directions; ++d) {
                DirParams dp;
                dp.w_ih = Var<T>(nn::uniform_init<T>(rng, {gate_rows, in_dim}, hidden), true);
                dp.w_hh = Var<T>(nn::uniform_init<T>(rng, {gate_rows, hidden}, hidden), true);
                dp.b_ih = Var<T>(nn::uniform_init<T>(rng, {gate_rows}, hidden), true);
                dp.b_hh = Var<T>(nn::uniform_init<T>(rng, {gate_rows}, hidden), true);
                p[l].push_back(std::move(dp));
            }
        }
    }

    struct Output {
        std::vector<Var<T>> per_frame; // [L] entries of [B, directions*hidden]
        Var<T> final_state;            // [B, directions*hidden]
    };

    // Hidden (and cell) state carries across padded steps via mask selection,
    // so each clip's trajectory matches its standalone run exactly.
    Output run(Graph<T>& g, const SequenceBatch<T>& batch) const {
        const size_t steps = batch.steps();
        require(steps >= 1, "rnn: empty batch");
        require(batch.dim() == input_dim, "rnn: feature dim mismatch with stack input");
        std::vector<Var<T>> cur(steps);
        for (size_t t = 0; t < steps; ++t) cur[t] = constant(batch.frames[t]);

        Var<T> final_fwd, final_bwd;
        for (size_t l = 0; l < layers; ++l) {
            std::vector<Var<T>> outs_f(steps), outs_b;
            run_direction(g, batch, cur, p[l][0], false, outs_f);
            if (directions == 2) {
                outs_b.resize(steps);
                run_direction(g, batch, cur, p[l][1], true, outs_b);
            }
            for (size_t t = 0; t < steps; ++t)
                cur[t] = directions == 2 ? concat_cols(g, outs_f[t], outs_b[t]) : outs_f[t];
            if (l + 1 == layers) {
                final_fwd = outs_f[steps - 1];
                if (directions == 2) final_bwd = outs_b[0];
            }
        }
        Output out;
        out.per_frame = std::move(cur);
        out.final_state = directions == 2 ? concat_cols(g, final_fwd, final_bwd) : final_fwd;
        return out;
    }

    void collect(const std::string& prefix, std::vector<NamedParam<T>>& out_params) {
        for (size_t l = 0; l < layers; ++l)
            for (size_t d = 0; d < directions; ++d) {
                const std::string base =
                    prefix + ".l" + std::to_string(l) + (d == 0 ? ".fwd" : ".bwd");
                out_params.push_back({base + ".w_ih", p[l][d].w_ih});
                out_params.push_back({base + ".w_hh", p[l][d].w_hh});
                out_params.push_back({base + ".b_ih", p[l][d].b_ih});
                out_params.push_back({base + ".b_hh", p[l][d].b_hh});
            }
    }

private:
    void run_direction(Graph<T>& g, const SequenceBatch<T>& batch, const std::vector<Var<T>>& in,
                       const DirParams& dp, bool reversed, std::vector<Var<T>>& out) const {
        const size_t steps = batch.steps(), bsz = batch.batch();
        Var<T> h = constant(Array<T>({bsz, hidden}, T(0)));
        Var<T> c;
        if (cell == CellType::lstm) c = constant(Array<T>({bsz, hidden}, T(0)));
        for (size_t s = 0; s < steps; ++s) {
            const size_t t = reversed ? steps - 1 - s : s;
            if (cell == CellType::gru) {
                Var<T> h_new = gru_cell(g, in[t], h, dp.w_ih, dp.w_hh, dp.b_ih, dp.b_hh);
                h = mask_lerp(g, h_new, h, batch.masks[t]);
            } else {
                auto res = lstm_cell(g, in[t], h, c, dp.w_ih, dp.w_hh, dp.b_ih, dp.b_hh);
                h = mask_lerp(g, res.h, h, batch.masks[t]);
                c = mask_lerp(g, res.c, c, batch.masks[t]);
            }
            out[t] = h;
        }
    }
};

// ---- model families ----

template <typename T>
struct CnnModel {
    CnnSpec spec;
    std::vector<nn::Conv2d<T>> convs;
    std::vector<nn::BatchNorm2d<T>> bns;
    nn::Linear<T> fc1, fc2, fc3, head;
    size_t flat_dim = 0;

    CnnModel(const CnnSpec& s, Rng& rng) : spec(s) {
        require(s.channels.size() == s.kernels.size() && s.channels.size() == s.pool_after.size(),
                "cnn: channels/kernels/pools must have equal length");
        require(s.fc_sizes.size() == 3 && s.fc_sizes[1] == s.fc_sizes[2],
                "cnn: expects three FC sizes with matching skip dimensions");
        size_t h = s.input_height, w = s.input_width, c_in = s.input_channels;
        for (size_t i = 0; i < s.channels.size(); ++i) {
            const size_t k = s.kernels[i];
            require(h >= k && w >= k,
                    "cnn: spatial dims fall below kernel size at conv " + std::to_string(i) +
                        " (" + std::to_string(h) + "x" + std::to_string(w) + " vs kernel " +
                        std::to_string(k) + ")");
            convs.emplace_back(rng, c_in, s.channels[i], k);
            bns.emplace_back(s.channels[i]);
            h -= k - 1;
            w -= k - 1;
            if (s.pool_after[i]) {
                require(h >= 2 && w >= 2, "cnn: pool input smaller than 2x2");
                h /= 2;
                w /= 2;
            }
            c_in = s.channels[i];
        }
        flat_dim = c_in * h * w;
        fc1 = nn::Linear<T>(rng, flat_dim, s.fc_sizes[0]);
        fc2 = nn::Linear<T>(rng, s.fc_sizes[0], s.fc_sizes[1]);
        fc3 = nn::Linear<T>(rng, s.fc_sizes[1], s.fc_sizes[2]);
        head = nn::Linear<T>(rng, s.fc_sizes[2], 1);
    }

    // panes [B, C, H, W] -> scores [B, 1] in (0, 1)
    Var<T> forward(Graph<T>& g, const Array<T>& panes) {
        require(panes.ndim() == 4 && panes.dim(1) == spec.input_channels &&
                    panes.dim(2) == spec.input_height && panes.dim(3) == spec.input_width,
                "cnn: pane shape mismatch with spec");
        Var<T> x = constant(panes);
        for (size_t i = 0; i < convs.size(); ++i) {
            x = convs[i](g, x);
            x = bns[i](g, x);
            x = relu(g, x);
            if (spec.pool_after[i]) x = maxpool2d(g, x);
        }
        x = reshape(g, x, {panes.dim(0), flat_dim});
        x = dropout(g, x, spec.dropout);
        x = relu(g, fc1(g, x));
        x = relu(g, add(g, fc2(g, x), x));
        x = relu(g, add(g, fc3(g, x), x));
        return sigmoid(g, head(g, x));
    }

    std::vector<NamedParam<T>> params() {
        std::vector<NamedParam<T>> out;
        for (size_t i = 0; i < convs.size(); ++i) {
            convs[i].collect("conv" + std::to_string(i), out);
            std::vector<NamedState<T>> dummy;
            bns[i].collect("bn" + std::to_string(i), out, dummy);
        }
        fc1.collect("fc1", out);
        fc2.collect("fc2", out);
        fc3.collect("fc3", out);
        head.collect("head", out);
        return out;
    }

    std::vector<NamedState<T>> state() {
        std::vector<NamedState<T>> out;
        for (size_t i = 0; i < bns.size(); ++i) {
            std::vector<NamedParam<T>> dummy;
            bns[i].collect("bn" + std::to_string(i), dummy, out);
        }
        return out;
    }
};

template <typename T>
struct RnnFfModel {
    RnnFfSpec spec;
    RnnStack<T> rnn;
    nn::Linear<T> fc1, fc2, head;
    nn::LayerNorm<T> ln1, ln2;

    RnnFfModel(const RnnFfSpec& s, Rng& rng) : spec(s) {
        const size_t hd = s.hidden_size();
        rnn = RnnStack<T>(rng, s.cell, s.layers, s.directions, s.feature_dim, hd);
        const size_t enc = s.directions * hd;
        fc1 = nn::Linear<T>(rng, enc, s.fc_sizes[0]);
        ln1 = nn::LayerNorm<T>(s.fc_sizes[0]);
        fc2 = nn::Linear<T>(rng, s.fc_sizes[0], s.fc_sizes[1]);
        ln2 = nn::LayerNorm<T>(s.fc_sizes[1]);
        head = nn::Linear<T>(rng, s.fc_sizes[1], 1);
    }

    // -> scores [B, 1]
    Var<T> forward(Graph<T>& g, const SequenceBatch<T>& batch) {
        auto enc = rnn.run(g, batch);
        Var<T> x = dropout(g, enc.final_state, spec.dropout);
        x = relu(g, ln1(g, fc1(g, x)));
        x = relu(g, ln2(g, fc2(g, x)));
        return sigmoid(g, head(g, x));
    }

    std::vector<NamedParam<T>> params() {
        std::vector<NamedParam<T>> out;
        rnn.collect("rnn", out);
        fc1.collect("fc1", out);
        ln1.collect("ln1", out);
        fc2.collect("fc2", out);
        ln2.collect("ln2", out);
        head.collect("head", out);
        return out;
    }
    std::vector<NamedState<T>> state() { return {}; }
};

template <typename T>
struct RnnFtOutput {
    Var<T> frame_scores; // [steps*B, 1], row t*B + b
    size_t steps = 0;
    size_t batch = 0;
    Array<T> flat_mask; // [steps*B, 1], mirrors the sequence masks
};

template <typename T>
struct RnnFtModel {
    RnnFtSpec spec;
    RnnStack<T> rnn;
    nn::Linear<T> head;

    RnnFtModel(const RnnFtSpec& s, Rng& rng) : spec(s) {
        rnn = RnnStack<T>(rng, CellType::gru, s.layers, s.directions, s.feature_dim, s.hidden);
        head = nn::Linear<T>(rng, s.directions * s.hidden, 1);
    }

    RnnFtOutput<T> forward(Graph<T>& g, const SequenceBatch<T>& batch) {
        auto enc = rnn.run(g, batch);
        Var<T> stacked = stack_rows(g, enc.per_frame); // [L*B, dirs*hidden]
        stacked = dropout(g, stacked, spec.dropout);
        RnnFtOutput<T> out;
        out.frame_scores = sigmoid(g, head(g, stacked));
        out.steps = batch.steps();
        out.batch = batch.batch();
        out.flat_mask = Array<T>({out.steps * out.batch, 1});
        for (size_t t = 0; t < out.steps; ++t)
            for (size_t b = 0; b < out.batch; ++b)
                out.flat_mask.data[t * out.batch + b] = batch.masks[t].data[b];
        return out;
    }

    // Collapse per-frame scores over valid frames only.
    std::vector<double> collapse(const RnnFtOutput<T>& out, Collapse mode) const {
        std::vector<double> result(out.batch);
        std::vector<double> vals;
        for (size_t b = 0; b < out.batch; ++b) {
            vals.clear();
            for (size_t t = 0; t < out.steps; ++t)
                if (out.flat_mask.data[t * out.batch + b] != T(0))
                    vals.push_back(static_cast<double>(out.frame_scores.value().data[t * out.batch + b]));
            require(!vals.empty(), "ft: clip with zero valid frames");
            result[b] = collapse_values(vals, mode);
        }
        return result;
    }

    static double collapse_values(std::vector<double>& vals, Collapse mode) {
        switch (mode) {
            case Collapse::mean: {
                double s = 0;
                for (double v : vals) s += v;
                return s / static_cast<double>(vals.size());
            }
            case Collapse::median: {
                std::sort(vals.begin(), vals.end());
                const size_t n = vals.size();
                return n % 2 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
            }
            case Collapse::min: return *std::min_element(vals.begin(), vals.end());
            case Collapse::max: return *std::max_element(vals.begin(), vals.end());
        }
        fail("ft: bad collapse mode");
    }

    std::vector<NamedParam<T>> params() {
        std::vector<NamedParam<T>> out;
        rnn.collect("rnn", out);
        head.collect("head", out);
        return out;
    }
    std::vector<NamedState<T>> state() { return {}; }
};

} // namespace omoq
