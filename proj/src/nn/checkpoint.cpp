#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "uwbg/error.hpp"
#include "uwbg/nn/model.hpp"

namespace uwbg::nn {

// Layout (little-endian):
//   "UWBM" | u16 version | u32 json_len | json_len bytes of ModelConfig JSON
//   then for each parameter tensor in declaration order:
//   u32 rank | rank x u32 dims | float32 values

namespace {

constexpr char kMagic[4] = {'U', 'W', 'B', 'M'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v)
{
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    void need(std::size_t n, const char* field) const
    {
        if (pos_ + n > bytes_.size()) {
            throw FormatError(field, std::string("checkpoint truncated while reading ") + field);
        }
    }

    std::uint16_t u16(const char* field)
    {
        need(2, field);
        const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }

    std::uint32_t u32(const char* field)
    {
        need(4, field);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    std::string str(std::size_t n, const char* field)
    {
        need(n, field);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

} // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& model)
{
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_u16(out, kVersion);
    const std::string json = nlohmann::json(model.config()).dump();
    put_u32(out, static_cast<std::uint32_t>(json.size()));
    out.insert(out.end(), json.begin(), json.end());
    for (const auto& layer : model.params()) {
        for (const auto& t : layer) {
            put_u32(out, static_cast<std::uint32_t>(t.rank()));
            for (auto d : t.shape()) {
                put_u32(out, static_cast<std::uint32_t>(d));
            }
            for (float v : t.values()) {
                put_u32(out, std::bit_cast<std::uint32_t>(v));
            }
        }
    }
    return out;
}

Model decode_checkpoint(const std::vector<std::uint8_t>& bytes)
{
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("magic", "not a model checkpoint: bad magic");
    }
    Reader r(bytes);
    r.str(4, "magic");
    const auto version = r.u16("version");
    if (version != kVersion) {
        throw FormatError("version", "unsupported checkpoint version " + std::to_string(version));
    }
    const auto len = r.u32("config length");
    ModelConfig cfg;
    try {
        cfg = nlohmann::json::parse(r.str(len, "config")).get<ModelConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("config", std::string("checkpoint config is not valid JSON: ") + e.what());
    }
    Model model(cfg);
    for (auto& layer : model.params()) {
        for (auto& t : layer) {
            const auto rank = r.u32("tensor rank");
            Shape shape;
            for (std::uint32_t i = 0; i < rank; ++i) {
                shape.push_back(r.u32("tensor dims"));
            }
            if (shape != t.shape()) {
                throw FormatError("tensor dims", "checkpoint tensor " + to_string(shape) + " does not match " +
                                                     to_string(t.shape()) + " implied by the config");
            }
            for (auto& v : t.values()) {
                v = std::bit_cast<float>(r.u32("tensor data"));
            }
        }
    }
    if (!r.done()) {
        throw FormatError("tensor data", "trailing bytes after the last parameter tensor");
    }
    return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path)
{
    const auto bytes = encode_checkpoint(model);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) {
        throw IoError("write failed: " + path.string());
    }
}

Model load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open checkpoint " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

} // namespace uwbg::nn
