#include <cmath>

#include "uwbg/error.hpp"
#include "uwbg/eval.hpp"
#include "uwbg/rng.hpp"

namespace uwbg::eval {

void SplitSpec::validate() const
{
    for (double f : {train_frac, val_frac, test_frac}) {
        if (!(f >= 0.0 && f <= 1.0)) {
            throw InvalidArgument("split fractions must lie in [0, 1]");
        }
    }
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
        throw InvalidArgument("split fractions must sum to 1");
    }
}

void to_json(nlohmann::json& j, const SplitSpec& s)
{
    j = nlohmann::json{
        {"train_frac", s.train_frac}, {"val_frac", s.val_frac}, {"test_frac", s.test_frac}, {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SplitSpec& s)
{
    for (const auto& [key, value] : j.items()) {
        if (key == "train_frac") {
            s.train_frac = value.get<double>();
        } else if (key == "val_frac") {
            s.val_frac = value.get<double>();
        } else if (key == "test_frac") {
            s.test_frac = value.get<double>();
        } else if (key == "seed") {
            s.seed = value.get<std::uint64_t>();
        } else {
            throw InvalidArgument("unknown split key '" + key + "'");
        }
    }
}

SplitCounts split_counts(std::size_t n, const SplitSpec& spec)
{
    spec.validate();
    // The epsilon absorbs products like 0.7 * 30 = 20.999999999999996.
    const auto part = [n](double frac) {
        return static_cast<std::size_t>(std::floor(frac * static_cast<double>(n) + 1e-9));
    };
    SplitCounts c;
    c.train = part(spec.train_frac);
    c.val = std::min(part(spec.val_frac), n - c.train);
    c.test = n - c.train - c.val;
    return c;
}

DatasetSplit split_dataset(const DatasetManifest& manifest, const SplitSpec& spec)
{
    spec.validate();
    if (manifest.entries.empty()) {
        throw InvalidArgument("cannot split an empty manifest");
    }
    std::vector<std::vector<std::size_t>> by_class(synth::kNumSubclasses);
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const int s = manifest.entries[i].subclass;
        if (s < 0 || s >= synth::kNumSubclasses) {
            throw InvalidArgument("manifest entry " + manifest.entries[i].path + " has subclass " +
                                  std::to_string(s));
        }
        by_class[static_cast<std::size_t>(s)].push_back(i);
    }

    // 0 = train, 1 = val, 2 = test
    std::vector<int> part(manifest.entries.size(), 0);
    for (int s = 0; s < synth::kNumSubclasses; ++s) {
        auto& idx = by_class[static_cast<std::size_t>(s)];
        Rng rng(derive_seed(spec.seed, 0x73706C6974ULL, static_cast<std::uint64_t>(s)));
        shuffle(idx, rng);
        const auto c = split_counts(idx.size(), spec);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            part[idx[k]] = k < c.train ? 0 : (k < c.train + c.val ? 1 : 2);
        }
    }

    DatasetSplit out;
    for (auto* m : {&out.train, &out.val, &out.test}) {
        m->format_version = manifest.format_version;
        m->config = manifest.config;
        m->root = manifest.root;
    }
    DatasetManifest* targets[3] = {&out.train, &out.val, &out.test};
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        targets[part[i]]->entries.push_back(manifest.entries[i]);
    }
    return out;
}

} // namespace uwbg::eval
