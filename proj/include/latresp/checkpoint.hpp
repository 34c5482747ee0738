#pragma once

// JSON checkpoint for VaeModel (+ optional optimizer state). Numbers are written
// in shortest round-trip form, so save/load is bit-exact.

#include <fstream>
#include <optional>
#include <string>

#include "json.hpp"

#include "latresp/csv.hpp"
#include "latresp/errors.hpp"
#include "latresp/nn.hpp"
#include "latresp/vae.hpp"

namespace latresp {

inline constexpr const char* kCheckpointFormat = "latresp-vae";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    VaeModel model;
    std::optional<AdamState> optimizer;
    nlohmann::json meta = nlohmann::json::object();  // free-form run metadata
};

namespace detail {

inline nlohmann::json mlp_to_json(const Mlp& net) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : net.layers) {
        nlohmann::json w = nlohmann::json::array();
        for (std::size_t r = 0; r < l.weight.rows; ++r) {
            const auto row = l.weight.row(r);
            w.push_back(std::vector<double>(row.begin(), row.end()));
        }
        layers.push_back({{"in", l.in_dim()},
                          {"out", l.out_dim()},
                          {"activation", std::string(to_string(l.activation))},
                          {"weight", std::move(w)},
                          {"bias", l.bias}});
    }
    return {{"layers", std::move(layers)}};
}

inline Mlp mlp_from_json(const nlohmann::json& j, const std::string& what) {
    Mlp net;
    for (const auto& lj : j.at("layers")) {
        DenseLayer l;
        const auto out = lj.at("out").get<std::size_t>();
        const auto in = lj.at("in").get<std::size_t>();
        l.weight = Matrix(out, in);
        const auto& w = lj.at("weight");
        if (w.size() != out) throw DataError(what + ": weight has wrong row count");
        for (std::size_t r = 0; r < out; ++r) {
            const auto row = w[r].get<std::vector<double>>();
            if (row.size() != in) throw DataError(what + ": weight row has wrong length");
            std::copy(row.begin(), row.end(), l.weight.row(r).begin());
        }
        l.bias = lj.at("bias").get<std::vector<double>>();
        l.activation = activation_from_string(lj.at("activation").get<std::string>());
        net.layers.push_back(std::move(l));
    }
    net.validate();
    return net;
}

inline std::vector<std::size_t> layer_sizes(const Mlp& net) {
    std::vector<std::size_t> s;
    if (!net.layers.empty()) s.push_back(net.in_dim());
    for (const auto& l : net.layers) s.push_back(l.out_dim());
    return s;
}

}  // namespace detail

inline nlohmann::json checkpoint_to_json(const Checkpoint& ck) {
    const VaeModel& m = ck.model;
    nlohmann::json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["latent_dim"] = m.latent_dim;
    j["obs_dim"] = m.obs_dim;
    j["beta"] = m.beta;
    j["seed"] = m.seed;
    j["encoder_sizes"] = detail::layer_sizes(m.encoder);
    j["decoder_sizes"] = detail::layer_sizes(m.decoder);
    j["normalizer"] = {{"mean", m.normalizer.mean}, {"scale", m.normalizer.scale}};
    j["encoder"] = detail::mlp_to_json(m.encoder);
    j["decoder"] = detail::mlp_to_json(m.decoder);
    if (ck.optimizer) {
        const auto& s = *ck.optimizer;
        j["optimizer"] = {{"step", s.step}, {"lr", s.lr},   {"beta1", s.beta1}, {"beta2", s.beta2},
                          {"eps", s.eps},   {"m", s.m},     {"v", s.v}};
    }
    j["meta"] = ck.meta;
    return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != kCheckpointFormat) throw DataError("not a latresp checkpoint");
        if (j.at("version").get<int>() != kCheckpointVersion) throw DataError("unsupported checkpoint version");
        Checkpoint ck;
        VaeModel& m = ck.model;
        m.latent_dim = j.at("latent_dim").get<std::size_t>();
        m.obs_dim = j.at("obs_dim").get<std::size_t>();
        m.beta = j.at("beta").get<double>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.normalizer.mean = j.at("normalizer").at("mean").get<std::vector<double>>();
        m.normalizer.scale = j.at("normalizer").at("scale").get<std::vector<double>>();
        m.encoder = detail::mlp_from_json(j.at("encoder"), "encoder");
        m.decoder = detail::mlp_from_json(j.at("decoder"), "decoder");
        m.validate();
        if (j.contains("optimizer")) {
            const auto& o = j.at("optimizer");
            AdamState s;
            s.step = o.at("step").get<std::uint64_t>();
            s.lr = o.at("lr").get<double>();
            s.beta1 = o.at("beta1").get<double>();
            s.beta2 = o.at("beta2").get<double>();
            s.eps = o.at("eps").get<double>();
            s.m = o.at("m").get<std::vector<double>>();
            s.v = o.at("v").get<std::vector<double>>();
            ck.optimizer = std::move(s);
        }
        if (j.contains("meta")) ck.meta = j.at("meta");
        return ck;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed checkpoint: ") + e.what());
    } catch (const DimensionError& e) {
        throw DataError(std::string("inconsistent checkpoint: ") + e.what());
    }
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    auto f = csv::open_out(path);
    f << checkpoint_to_json(ck).dump(1) << '\n';
    if (!f) throw DataError("write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    auto f = csv::open_in(path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("cannot parse checkpoint '" + path + "': " + e.what());
    }
    return checkpoint_from_json(j);
}

}  // namespace latresp
