#pragma once

// Self-describing text checkpoint:
//
//   rmwarn-checkpoint 1
//   cell_kind elman
//   input_dim 40
//   hidden_dim 16
//   head_hidden 16
//   leads 1 6
//   tensors 12
//   tensor cell.Wx 16 40
//   <rows*cols values, row-major, shortest round-trip decimal>
//   ...
//
// Values print with std::to_chars, so reload is bit-exact.

#include "rmwarn/error.hpp"
#include "rmwarn/rnn.hpp"
#include "rmwarn/timeseries.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace rmwarn {

inline void save_checkpoint(std::ostream& out, const RmModel& model) {
    const auto& shape = model.shape();
    out << "rmwarn-checkpoint 1\n";
    out << "cell_kind " << to_string(shape.cell) << '\n';
    out << "input_dim " << shape.input_dim << '\n';
    out << "hidden_dim " << shape.hidden_dim << '\n';
    out << "head_hidden " << shape.head_hidden << '\n';
    out << "leads";
    for (int l : shape.leads) out << ' ' << l;
    out << '\n';
    out << "tensors " << model.layout().size() << '\n';
    for (const auto& t : model.layout()) {
        out << "tensor " << t.name << ' ' << t.rows << ' ' << t.cols << '\n';
        const auto mat = Eigen::Map<const Eigen::MatrixXd>(model.params().data() + t.offset, t.rows, t.cols);
        for (Eigen::Index r = 0; r < t.rows; ++r) {
            for (Eigen::Index c = 0; c < t.cols; ++c) out << (c ? " " : "") << format_double(mat(r, c));
            out << '\n';
        }
    }
}

inline void save_checkpoint(const std::string& path, const RmModel& model) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint " + path);
    save_checkpoint(out, model);
}

inline RmModel load_checkpoint(std::istream& in) {
    auto expect = [&](const std::string& key) {
        std::string k;
        if (!(in >> k) || k != key) throw DataError("checkpoint: expected '" + key + "'");
    };
    expect("rmwarn-checkpoint");
    int version = 0;
    in >> version;
    if (version != 1) throw DataError("checkpoint: unsupported version");
    ModelShape shape;
    std::string kind;
    expect("cell_kind");
    in >> kind;
    shape.cell = parse_cell_kind(kind);
    expect("input_dim");
    in >> shape.input_dim;
    expect("hidden_dim");
    in >> shape.hidden_dim;
    expect("head_hidden");
    in >> shape.head_hidden;
    expect("leads");
    std::string line;
    std::getline(in, line);
    std::istringstream leads(line);
    shape.leads.clear();
    for (int l; leads >> l;) shape.leads.push_back(l);
    RmModel model(shape);
    expect("tensors");
    std::size_t n = 0;
    in >> n;
    if (n != model.layout().size()) throw DataError("checkpoint: tensor count does not match cell kind");
    for (const auto& t : model.layout()) {
        std::string name;
        Eigen::Index rows = 0, cols = 0;
        expect("tensor");
        in >> name >> rows >> cols;
        if (name != t.name || rows != t.rows || cols != t.cols) throw DataError("checkpoint: unexpected tensor " + name);
        auto mat = Eigen::Map<Eigen::MatrixXd>(model.params().data() + t.offset, t.rows, t.cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) {
                std::string tok;
                in >> tok;
                const auto v = parse_double(tok);
                if (!v) throw DataError("checkpoint: bad value in " + name);
                mat(r, c) = *v;
            }
    }
    if (!in) throw DataError("checkpoint: truncated");
    return model;
}

inline RmModel load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint " + path);
    return load_checkpoint(in);
}

}  // namespace rmwarn
