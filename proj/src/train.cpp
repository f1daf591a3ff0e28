#include <algorithm>
#include <cmath>
#include <numeric>

#include "uwbg/error.hpp"
#include "uwbg/eval.hpp"
#include "uwbg/rng.hpp"

namespace uwbg::eval {

namespace {

constexpr std::uint64_t kInitSalt = 0x696E6974ULL;   // "init"
constexpr std::uint64_t kOrderSalt = 0x6F72646572ULL; // "order"

void check_set(const models::ModelConfig& cfg, const ImageSet& set, const char* what)
{
    if (set.size() == 0) {
        return;
    }
    if (set.channels != cfg.input.channels || set.height != cfg.input.height || set.width != cfg.input.width) {
        throw ShapeError(std::string(what) + " images are " + std::to_string(set.channels) + "x" +
                         std::to_string(set.height) + "x" + std::to_string(set.width) + " but model '" + cfg.name +
                         "' expects " + std::to_string(cfg.input.channels) + "x" + std::to_string(cfg.input.height) +
                         "x" + std::to_string(cfg.input.width));
    }
}

double accuracy_percent(const std::vector<int>& truth, const std::vector<int>& pred)
{
    if (truth.empty()) {
        return 0.0;
    }
    std::size_t hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        hit += truth[i] == pred[i];
    }
    return 100.0 * static_cast<double>(hit) / static_cast<double>(truth.size());
}

} // namespace

nn::Tensor ImageSet::batch(const std::vector<std::size_t>& idx) const
{
    const std::size_t n = sample_size();
    nn::Tensor t({idx.size(), static_cast<std::size_t>(channels), static_cast<std::size_t>(height),
                  static_cast<std::size_t>(width)});
    float* dst = t.data();
    for (std::size_t b = 0; b < idx.size(); ++b) {
        const std::uint8_t* src = chw.data() + idx[b] * n;
        for (std::size_t k = 0; k < n; ++k) {
            dst[b * n + k] = src[k] / 255.0f;
        }
    }
    return t;
}

ImageSet load_images(const DatasetManifest& manifest, const preprocess::PreprocessConfig& cfg)
{
    cfg.validate();
    ImageSet set;
    set.height = cfg.target_height;
    set.width = cfg.target_width;
    const std::size_t n = set.sample_size();
    set.chw.resize(n * manifest.entries.size());
    std::vector<float> planes(n);
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const auto& e = manifest.entries[i];
        const auto path = manifest.resolve(e);
        const auto map = synth::load_rtm(path);
        if (map.label().index() != e.subclass) {
            throw FormatError("subclass", path.string() + ": manifest says subclass " + std::to_string(e.subclass) +
                                              " but the file holds " + map.label().name());
        }
        preprocess::FalseColorImage img;
        try {
            img = preprocess::preprocess_pipeline(map, cfg);
        } catch (const InvalidArgument& ex) {
            throw InvalidArgument(path.string() + ": " + ex.what());
        }
        models::image_to_chw(img, planes.data());
        for (std::size_t k = 0; k < n; ++k) {
            set.chw[i * n + k] = static_cast<std::uint8_t>(std::lround(planes[k] * 255.0f));
        }
        set.labels.push_back(e.subclass);
        set.sources.push_back(path.string());
    }
    return set;
}

void TrainParams::validate() const
{
    if (epochs < 0) {
        throw InvalidArgument("epochs must be >= 0");
    }
    if (batch_size < 1) {
        throw InvalidArgument("batch_size must be >= 1");
    }
    if (!(adam.lr > 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
        !(adam.eps > 0.0)) {
        throw InvalidArgument("adam hyperparameters need lr > 0, 0 <= beta < 1, eps > 0");
    }
}

void to_json(nlohmann::json& j, const TrainParams& p)
{
    j = nlohmann::json{{"epochs", p.epochs},       {"batch_size", p.batch_size}, {"lr", p.adam.lr},
                       {"beta1", p.adam.beta1},    {"beta2", p.adam.beta2},      {"eps", p.adam.eps},
                       {"seed", p.seed}};
}

void from_json(const nlohmann::json& j, TrainParams& p)
{
    for (const auto& [key, value] : j.items()) {
        if (key == "epochs") {
            p.epochs = value.get<int>();
        } else if (key == "batch_size") {
            p.batch_size = value.get<int>();
        } else if (key == "lr") {
            p.adam.lr = value.get<double>();
        } else if (key == "beta1") {
            p.adam.beta1 = value.get<double>();
        } else if (key == "beta2") {
            p.adam.beta2 = value.get<double>();
        } else if (key == "eps") {
            p.adam.eps = value.get<double>();
        } else if (key == "seed") {
            p.seed = value.get<std::uint64_t>();
        } else {
            throw InvalidArgument("unknown train key '" + key + "'");
        }
    }
}

void to_json(nlohmann::json& j, const EpochLog& e)
{
    j = nlohmann::json{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_accuracy", e.val_accuracy}};
}

void to_json(nlohmann::json& j, const TrainLog& l)
{
    j = nlohmann::json{{"epochs", l.epochs}, {"best_epoch", l.best_epoch}, {"best_val_accuracy", l.best_val_accuracy}};
}

std::vector<int> predict_all(const models::Model& model, const ImageSet& set, std::size_t batch_size)
{
    check_set(model.config(), set, "evaluation");
    std::vector<int> out;
    out.reserve(set.size());
    const std::size_t classes = static_cast<std::size_t>(model.config().num_classes);
    for (std::size_t start = 0; start < set.size(); start += batch_size) {
        std::vector<std::size_t> idx(std::min(batch_size, set.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        const auto logits = model.forward(set.batch(idx));
        for (std::size_t b = 0; b < idx.size(); ++b) {
            const float* row = logits.data() + b * classes;
            out.push_back(static_cast<int>(std::max_element(row, row + classes) - row));
        }
    }
    return out;
}

TrainResult train(const models::ModelConfig& cfg, const ImageSet& train_set, const ImageSet& val_set,
                  const TrainParams& params, const EpochCallback& on_epoch)
{
    params.validate();
    check_set(cfg, train_set, "training");
    check_set(cfg, val_set, "validation");

    TrainResult result{models::build_model(cfg, derive_seed(params.seed, kInitSalt, 0)), {}};
    if (params.epochs == 0) {
        return result;
    }
    if (train_set.size() == 0) {
        throw InvalidArgument("training set is empty");
    }

    models::Model model = result.model;
    nn::AdamState adam(params.adam);
    Rng order_rng(derive_seed(params.seed, kOrderSalt, 0));
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto bs = static_cast<std::size_t>(params.batch_size);

    for (int epoch = 1; epoch <= params.epochs; ++epoch) {
        shuffle(order, order_rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                               order.begin() + static_cast<std::ptrdiff_t>(std::min(start + bs, order.size())));
            std::vector<int> targets;
            targets.reserve(idx.size());
            for (auto i : idx) {
                targets.push_back(train_set.labels[i]);
            }
            nn::ParamSet<float> grads;
            const double loss = model.loss_and_grad(train_set.batch(idx), targets, grads);
            if (!std::isfinite(loss)) {
                throw std::runtime_error("training diverged: non-finite loss at epoch " + std::to_string(epoch));
            }
            loss_sum += loss * static_cast<double>(idx.size());

            std::vector<nn::Tensor*> p;
            std::vector<const nn::Tensor*> g;
            for (std::size_t l = 0; l < grads.size(); ++l) {
                for (std::size_t k = 0; k < grads[l].size(); ++k) {
                    p.push_back(&model.params()[l][k]);
                    g.push_back(&grads[l][k]);
                }
            }
            nn::adam_step(p, g, adam);
        }

        EpochLog entry{epoch, loss_sum / static_cast<double>(order.size()),
                       accuracy_percent(val_set.labels, predict_all(model, val_set))};
        result.log.epochs.push_back(entry);
        if (epoch == 1 || entry.val_accuracy > result.log.best_val_accuracy) {
            result.log.best_epoch = epoch;
            result.log.best_val_accuracy = entry.val_accuracy;
            result.model = model;
        }
        if (on_epoch) {
            on_epoch(entry);
        }
    }
    return result;
}

TrainResult train(const models::ModelConfig& cfg, const DatasetManifest& train_manifest,
                  const DatasetManifest& val_manifest, const TrainParams& params,
                  const preprocess::PreprocessConfig& pre, const EpochCallback& on_epoch)
{
    params.validate();
    return train(cfg, load_images(train_manifest, pre), load_images(val_manifest, pre), params, on_epoch);
}

} // namespace uwbg::eval
