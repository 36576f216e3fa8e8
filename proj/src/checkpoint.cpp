#include "kds/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "kds/errors.hpp"

namespace kds::checkpoint {

using nlohmann::json;

namespace {

const char* kB64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string encode_doubles(const std::vector<double>& values) {
    std::vector<unsigned char> bytes(values.size() * 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &values[i], 8);
        for (int b = 0; b < 8; ++b)
            bytes[i * 8 + static_cast<std::size_t>(b)] =
                static_cast<unsigned char>((bits >> (8 * b)) & 0xffu);
    }
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        std::uint32_t n = (static_cast<std::uint32_t>(bytes[i]) << 16) |
                          (static_cast<std::uint32_t>(bytes[i + 1]) << 8) | bytes[i + 2];
        out.push_back(kB64[(n >> 18) & 63]);
        out.push_back(kB64[(n >> 12) & 63]);
        out.push_back(kB64[(n >> 6) & 63]);
        out.push_back(kB64[n & 63]);
    }
    std::size_t rest = bytes.size() - i;
    if (rest == 1) {
        std::uint32_t n = static_cast<std::uint32_t>(bytes[i]) << 16;
        out.push_back(kB64[(n >> 18) & 63]);
        out.push_back(kB64[(n >> 12) & 63]);
        out.push_back('=');
        out.push_back('=');
    } else if (rest == 2) {
        std::uint32_t n = (static_cast<std::uint32_t>(bytes[i]) << 16) |
                          (static_cast<std::uint32_t>(bytes[i + 1]) << 8);
        out.push_back(kB64[(n >> 18) & 63]);
        out.push_back(kB64[(n >> 12) & 63]);
        out.push_back(kB64[(n >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

int b64_value(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}

std::vector<double> decode_doubles(const std::string& text) {
    std::vector<unsigned char> bytes;
    bytes.reserve(text.size() / 4 * 3);
    std::uint32_t buf = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=') break;
        int v = b64_value(c);
        if (v < 0) throw DataError("checkpoint: invalid base64 payload");
        buf = (buf << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            bytes.push_back(static_cast<unsigned char>((buf >> bits) & 0xffu));
        }
    }
    if (bytes.size() % 8 != 0) throw DataError("checkpoint: payload is not whole doubles");
    std::vector<double> out(bytes.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t n = 0;
        for (int b = 7; b >= 0; --b)
            n = (n << 8) | bytes[i * 8 + static_cast<std::size_t>(b)];
        std::memcpy(&out[i], &n, 8);
    }
    return out;
}

}  // namespace

Checkpoint snapshot(const nn::Model& model, const optim::Adam& opt,
                    const windowing::ChannelStats& stats, const windowing::WindowingConfig& wcfg,
                    std::size_t epoch, double train_lr) {
    Checkpoint ckpt;
    ckpt.spec = model.spec();
    for (const auto& p : model.params().items()) {
        ckpt.params.emplace_back(p.name, p.node->value);
        ckpt.trainable.push_back(p.trainable);
    }
    ckpt.stats = stats;
    ckpt.adam = opt.state();
    ckpt.epoch = epoch;
    ckpt.wcfg = wcfg;
    ckpt.train_lr = train_lr;
    return ckpt;
}

nn::Model restore_model(const Checkpoint& ckpt) {
    nn::Model model(ckpt.spec);
    auto& items = model.params().items();
    if (items.size() != ckpt.params.size())
        throw DataError("checkpoint: parameter list does not match architecture");
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& [name, values] = ckpt.params[i];
        if (items[i].name != name)
            throw DataError("checkpoint: parameter order mismatch at " + name);
        if (items[i].node->value.size() != values.size())
            throw DataError("checkpoint: parameter shape mismatch at " + name);
        items[i].node->value = values;
        bool trainable = i < ckpt.trainable.size() ? bool(ckpt.trainable[i]) : true;
        items[i].trainable = trainable;
        items[i].node->requires_grad = trainable;
    }
    return model;
}

void restore_adam(optim::Adam& opt, const Checkpoint& ckpt) {
    auto& st = opt.state();
    if (st.m.size() != ckpt.adam.m.size() || st.v.size() != ckpt.adam.v.size())
        throw DataError("checkpoint: optimizer state does not match parameter count");
    for (std::size_t i = 0; i < st.m.size(); ++i) {
        if (st.m[i].size() != ckpt.adam.m[i].size())
            throw DataError("checkpoint: optimizer state shape mismatch");
    }
    st = ckpt.adam;
}

std::string to_json(const Checkpoint& ckpt) {
    json j;
    j["format"] = "kds-checkpoint";
    j["version"] = 1;
    j["spec"] = {{"arch", nn::to_string(ckpt.spec.arch)},
                 {"input_channels", ckpt.spec.input_channels},
                 {"hidden", ckpt.spec.hidden},
                 {"depth", ckpt.spec.depth},
                 {"heads", ckpt.spec.heads},
                 {"ff", ckpt.spec.ff},
                 {"positional_encoding", ckpt.spec.positional_encoding},
                 {"seed", ckpt.spec.seed}};
    j["windowing"] = {{"window", ckpt.wcfg.window_size}, {"stride", ckpt.wcfg.stride}};
    j["stats"] = {{"mean", std::vector<double>(ckpt.stats.mean, ckpt.stats.mean + 4)},
                  {"stddev", std::vector<double>(ckpt.stats.stddev, ckpt.stats.stddev + 4)},
                  {"provenance", ckpt.stats.provenance}};
    j["epoch"] = ckpt.epoch;
    j["train_lr"] = ckpt.train_lr;
    json params = json::array();
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
        params.push_back({{"name", ckpt.params[i].first},
                          {"values", encode_doubles(ckpt.params[i].second)},
                          {"trainable", static_cast<bool>(ckpt.trainable[i])}});
    }
    j["params"] = std::move(params);
    json m = json::array(), v = json::array();
    for (const auto& t : ckpt.adam.m) m.push_back(encode_doubles(t));
    for (const auto& t : ckpt.adam.v) v.push_back(encode_doubles(t));
    j["adam"] = {{"step", ckpt.adam.step}, {"m", std::move(m)}, {"v", std::move(v)}};
    return j.dump(2);
}

Checkpoint from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: invalid JSON: ") + e.what());
    }
    try {
        if (j.at("format") != "kds-checkpoint" || j.at("version") != 1)
            throw DataError("checkpoint: unknown container format/version");
        Checkpoint ckpt;
        const auto& s = j.at("spec");
        ckpt.spec.arch = nn::arch_from_string(s.at("arch").get<std::string>());
        ckpt.spec.input_channels = s.at("input_channels").get<std::size_t>();
        ckpt.spec.hidden = s.at("hidden").get<std::size_t>();
        ckpt.spec.depth = s.at("depth").get<std::size_t>();
        ckpt.spec.heads = s.at("heads").get<std::size_t>();
        ckpt.spec.ff = s.at("ff").get<std::size_t>();
        ckpt.spec.positional_encoding = s.at("positional_encoding").get<bool>();
        ckpt.spec.seed = s.at("seed").get<std::uint64_t>();
        ckpt.wcfg.window_size = j.at("windowing").at("window").get<std::size_t>();
        ckpt.wcfg.stride = j.at("windowing").at("stride").get<std::size_t>();
        auto mean = j.at("stats").at("mean").get<std::vector<double>>();
        auto sd = j.at("stats").at("stddev").get<std::vector<double>>();
        if (mean.size() != 4 || sd.size() != 4)
            throw DataError("checkpoint: stats must carry 4 channels");
        for (int c = 0; c < 4; ++c) {
            ckpt.stats.mean[c] = mean[static_cast<std::size_t>(c)];
            ckpt.stats.stddev[c] = sd[static_cast<std::size_t>(c)];
        }
        ckpt.stats.provenance = j.at("stats").at("provenance").get<std::string>();
        ckpt.epoch = j.at("epoch").get<std::size_t>();
        ckpt.train_lr = j.at("train_lr").get<double>();
        for (const auto& p : j.at("params")) {
            ckpt.params.emplace_back(p.at("name").get<std::string>(),
                                     decode_doubles(p.at("values").get<std::string>()));
            ckpt.trainable.push_back(p.at("trainable").get<bool>());
        }
        ckpt.adam.step = j.at("adam").at("step").get<std::uint64_t>();
        for (const auto& t : j.at("adam").at("m"))
            ckpt.adam.m.push_back(decode_doubles(t.get<std::string>()));
        for (const auto& t : j.at("adam").at("v"))
            ckpt.adam.v.push_back(decode_doubles(t.get<std::string>()));
        return ckpt;
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: missing or mistyped field: ") + e.what());
    }
}

void save_file(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("checkpoint: cannot open for write: " + path);
    out << to_json(ckpt);
    if (!out) throw DataError("checkpoint: write failed: " + path);
}

Checkpoint load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::uint64_t param_hash(const nn::Model& model) {
    std::uint64_t hash = 1469598103934665603ull;
    for (const auto& p : model.params().items()) {
        for (double v : p.node->value) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof(bits));
            for (int i = 0; i < 8; ++i) {
                hash ^= (bits >> (8 * i)) & 0xffu;
                hash *= 1099511628211ull;
            }
        }
    }
    return hash;
}

}  // namespace kds::checkpoint
