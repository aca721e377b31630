#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "asfs/errors.hpp"
#include "asfs/nn.hpp"

namespace asfs {

// Versioned text container for model parameters. Values are written in
// base-10 decimal with 17 significant digits, which round-trips doubles
// exactly.
struct Checkpoint {
    int format_version = 1;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> meta;
    std::vector<std::pair<std::string, Mlp>> nets;

    const Mlp* find_net(const std::string& name) const {
        for (const auto& [n, net] : nets)
            if (n == name) return &net;
        return nullptr;
    }

    void save(std::ostream& os) const {
        os << "asfs-checkpoint " << format_version << "\n";
        os << "seed " << seed << "\n";
        for (const auto& [k, v] : meta) os << "meta " << k << " " << v << "\n";
        os << std::setprecision(17);
        for (const auto& [name, net] : nets) {
            os << "net " << name << " " << net.layers.size() << "\n";
            for (const auto& l : net.layers) {
                os << "layer " << l.in_dim() << " " << l.out_dim() << " "
                   << activation_name(l.activation) << "\n";
                for (std::size_t i = 0; i < l.weights.size(); ++i)
                    os << l.weights.data[i] << (i + 1 == l.weights.size() ? "\n" : " ");
                for (std::size_t i = 0; i < l.bias.size(); ++i)
                    os << l.bias[i] << (i + 1 == l.bias.size() ? "\n" : " ");
            }
        }
        os << "end\n";
    }

    void save_file(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw IoError("cannot open checkpoint for writing: " + path);
        save(os);
        if (!os) throw IoError("write failed: " + path);
    }

    static Checkpoint load(std::istream& is) {
        Checkpoint ck;
        std::string word;
        if (!(is >> word) || word != "asfs-checkpoint")
            throw IoError("not an asfs checkpoint");
        if (!(is >> ck.format_version) || ck.format_version != 1)
            throw IoError("unsupported checkpoint format version");
        while (is >> word) {
            if (word == "end") return ck;
            if (word == "seed") {
                if (!(is >> ck.seed)) throw IoError("checkpoint: bad seed");
            } else if (word == "meta") {
                std::string key;
                if (!(is >> key)) throw IoError("checkpoint: bad meta line");
                std::string rest;
                std::getline(is, rest);
                const auto pos = rest.find_first_not_of(' ');
                ck.meta[key] = pos == std::string::npos ? "" : rest.substr(pos);
            } else if (word == "net") {
                std::string name;
                std::size_t nlayers = 0;
                if (!(is >> name >> nlayers)) throw IoError("checkpoint: bad net header");
                Mlp net;
                for (std::size_t k = 0; k < nlayers; ++k) {
                    std::string tag, act;
                    std::size_t in = 0, out = 0;
                    if (!(is >> tag >> in >> out >> act) || tag != "layer")
                        throw IoError("checkpoint: bad layer header in net " + name);
                    DenseLayer l;
                    l.weights = Matrix(out, in);
                    l.bias.assign(out, 0.0);
                    l.activation = activation_from_name(act);
                    for (double& w : l.weights.data)
                        if (!(is >> w)) throw IoError("checkpoint: truncated weights in " + name);
                    for (double& b : l.bias)
                        if (!(is >> b)) throw IoError("checkpoint: truncated bias in " + name);
                    net.layers.push_back(std::move(l));
                }
                ck.nets.emplace_back(name, std::move(net));
            } else {
                throw IoError("checkpoint: unexpected token '" + word + "'");
            }
        }
        throw IoError("checkpoint: missing end marker");
    }

    static Checkpoint load_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw IoError("cannot open checkpoint: " + path);
        return load(is);
    }
};

} // namespace asfs
