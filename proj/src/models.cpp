#include "omoq/models.hpp"

namespace omoq {

const char* model_family_name(ModelFamily f) {
    switch (f) {
        case ModelFamily::cnn: return "cnn";
        case ModelFamily::rnn_ff: return "rnn_ff";
        case ModelFamily::rnn_ft: return "rnn_ft";
    }
    return "?";
}

const char* cell_type_name(CellType c) {
    return c == CellType::gru ? "gru" : "lstm";
}

const char* collapse_name(Collapse c) {
    switch (c) {
        case Collapse::mean: return "mean";
        case Collapse::median: return "median";
        case Collapse::min: return "min";
        case Collapse::max: return "max";
    }
    return "?";
}

ModelFamily model_family_from_name(const std::string& s) {
    if (s == "cnn") return ModelFamily::cnn;
    if (s == "rnn_ff") return ModelFamily::rnn_ff;
    if (s == "rnn_ft") return ModelFamily::rnn_ft;
    fail("models: unknown family '" + s + "' (cnn|rnn_ff|rnn_ft)");
}

CellType cell_type_from_name(const std::string& s) {
    if (s == "gru") return CellType::gru;
    if (s == "lstm") return CellType::lstm;
    fail("models: unknown cell '" + s + "' (gru|lstm)");
}

Collapse collapse_from_name(const std::string& s) {
    if (s == "mean") return Collapse::mean;
    if (s == "median") return Collapse::median;
    if (s == "min") return Collapse::min;
    if (s == "max") return Collapse::max;
    fail("models: unknown collapse '" + s + "' (mean|median|min|max)");
}

} // namespace omoq
