#include "xlg/probe.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "xlg/actstore.hpp"
#include "xlg/align.hpp"
#include "xlg/error.hpp"
#include "xlg/parallel.hpp"
#include "xlg/rng.hpp"

namespace xlg::probe {

using ojson = nlohmann::ordered_json;

std::vector<std::uint32_t> sample_positions(std::span<const std::uint32_t> lengths, std::uint64_t seed) {
    auto rng = Rng::stream(seed, "probe/positions");
    std::vector<std::uint32_t> out;
    out.reserve(lengths.size());
    for (std::size_t i = 0; i < lengths.size(); ++i) {
        if (lengths[i] == 0) throw ArgumentError("sentence " + std::to_string(i) + " has no tokens");
        out.push_back(static_cast<std::uint32_t>(rng.below(lengths[i])));
    }
    return out;
}

void LabeledVectors::push_back(std::span<const double> x, std::uint32_t label) {
    if (dim == 0 && labels.empty()) dim = x.size();
    if (x.size() != dim) throw ArgumentError("feature vector has dimension " + std::to_string(x.size()) +
                                             ", expected " + std::to_string(dim));
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(label);
}

std::vector<double> ProbeModel::logits(std::span<const double> x) const {
    if (x.size() != dim) throw ArgumentError("input dimension " + std::to_string(x.size()) + " != probe dimension " +
                                             std::to_string(dim));
    std::vector<double> z(n_classes);
    for (std::size_t c = 0; c < n_classes; ++c) {
        const double* w = weights.data() + c * dim;
        double s = bias[c];
        for (std::size_t j = 0; j < dim; ++j) s += w[j] * x[j];
        z[c] = s;
    }
    return z;
}

std::uint32_t ProbeModel::predict(std::span<const double> x) const {
    const auto z = logits(x);
    std::uint32_t best = 0;
    for (std::uint32_t c = 1; c < z.size(); ++c)
        if (z[c] > z[best]) best = c;
    return best;
}

namespace {

// Objective and gradient over the packed parameter vector [W (L*d), b (L)].
class Objective {
public:
    Objective(const LabeledVectors& data, std::size_t n_classes, double l2)
        : data_(data), classes_(n_classes), l2_(l2) {}

    std::size_t size() const { return classes_ * data_.dim + classes_; }

    double operator()(const std::vector<double>& theta, std::vector<double>* grad) const {
        const std::size_t d = data_.dim, L = classes_;
        const double* W = theta.data();
        const double* b = theta.data() + L * d;
        if (grad) grad->assign(size(), 0.0);
        std::vector<double> z(L);
        double loss = 0.0;
        for (std::size_t i = 0; i < data_.size(); ++i) {
            const auto x = data_.row(i);
            double zmax = -INFINITY;
            for (std::size_t c = 0; c < L; ++c) {
                double s = b[c];
                const double* w = W + c * d;
                for (std::size_t j = 0; j < d; ++j) s += w[j] * x[j];
                z[c] = s;
                zmax = std::max(zmax, s);
            }
            double denom = 0.0;
            for (std::size_t c = 0; c < L; ++c) denom += std::exp(z[c] - zmax);
            const double lse = zmax + std::log(denom);
            const auto y = data_.labels[i];
            loss += lse - z[y];
            if (grad) {
                double* gW = grad->data();
                double* gb = grad->data() + L * d;
                for (std::size_t c = 0; c < L; ++c) {
                    const double coef = std::exp(z[c] - lse) - (c == y ? 1.0 : 0.0);
                    double* g = gW + c * d;
                    for (std::size_t j = 0; j < d; ++j) g[j] += coef * x[j];
                    gb[c] += coef;
                }
            }
        }
        const double inv_n = 1.0 / static_cast<double>(data_.size());
        double wnorm = 0.0;
        for (std::size_t p = 0; p < L * d; ++p) wnorm += W[p] * W[p];
        if (grad) {
            for (auto& g : *grad) g *= inv_n;
            for (std::size_t p = 0; p < L * d; ++p) (*grad)[p] += l2_ * W[p];
        }
        return loss * inv_n + 0.5 * l2_ * wnorm;
    }

private:
    const LabeledVectors& data_;
    std::size_t classes_;
    double l2_;
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

constexpr std::size_t kHistory = 10;
constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 60;

}  // namespace

ProbeModel train_probe(const LabeledVectors& train, const TrainOptions& options) {
    if (train.size() == 0) throw ArgumentError("probe training set is empty");
    if (train.dim == 0) throw ArgumentError("probe features have dimension 0");
    if (!(options.l2_strength >= 0.0)) throw ArgumentError("l2_strength must be >= 0");
    const std::set<std::uint32_t> present(train.labels.begin(), train.labels.end());
    if (present.size() < 2) throw ArgumentError("probe training needs at least two classes");

    ProbeModel model;
    model.n_classes = *present.rbegin() + 1;
    model.dim = train.dim;
    const Objective objective(train, model.n_classes, options.l2_strength);

    std::vector<double> theta(objective.size(), 0.0), grad, next, next_grad;
    double f = objective(theta, &grad);
    model.loss_trace.push_back(f);

    std::deque<std::pair<std::vector<double>, std::vector<double>>> history;  // (s, y)
    std::vector<double> dir(theta.size());
    for (std::size_t iter = 0; iter < options.max_iters; ++iter) {
        if (max_abs(grad) <= options.tol) {
            model.converged = true;
            break;
        }
        // Two-loop recursion for the quasi-Newton direction.
        dir = grad;
        std::vector<double> alpha(history.size());
        for (std::size_t h = history.size(); h-- > 0;) {
            const auto& [s, y] = history[h];
            alpha[h] = dot(s, dir) / dot(y, s);
            for (std::size_t p = 0; p < dir.size(); ++p) dir[p] -= alpha[h] * y[p];
        }
        if (!history.empty()) {
            const auto& [s, y] = history.back();
            const double gamma = dot(s, y) / dot(y, y);
            for (auto& v : dir) v *= gamma;
        }
        for (std::size_t h = 0; h < history.size(); ++h) {
            const auto& [s, y] = history[h];
            const double beta = dot(y, dir) / dot(y, s);
            for (std::size_t p = 0; p < dir.size(); ++p) dir[p] += (alpha[h] - beta) * s[p];
        }
        for (auto& v : dir) v = -v;
        double slope = dot(grad, dir);
        if (!(slope < 0.0)) {
            history.clear();
            for (std::size_t p = 0; p < dir.size(); ++p) dir[p] = -grad[p];
            slope = -dot(grad, grad);
        }
        double step = history.empty() ? std::min(1.0, 1.0 / std::sqrt(dot(grad, grad))) : 1.0;

        bool accepted = false;
        double f_next = f;
        next.resize(theta.size());
        for (int ls = 0; ls < kMaxBacktracks; ++ls) {
            for (std::size_t p = 0; p < theta.size(); ++p) next[p] = theta[p] + step * dir[p];
            f_next = objective(next, &next_grad);
            if (f_next <= f + kArmijo * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;  // no further decrease representable

        std::vector<double> s(theta.size()), y(theta.size());
        for (std::size_t p = 0; p < theta.size(); ++p) {
            s[p] = next[p] - theta[p];
            y[p] = next_grad[p] - grad[p];
        }
        if (dot(s, y) > 1e-12 * dot(y, y)) {
            history.emplace_back(std::move(s), std::move(y));
            if (history.size() > kHistory) history.pop_front();
        }
        theta.swap(next);
        grad.swap(next_grad);
        f = f_next;
        model.loss_trace.push_back(f);
        ++model.iterations;
    }
    if (!model.converged && max_abs(grad) <= options.tol) model.converged = true;

    const std::size_t wsize = model.n_classes * model.dim;
    model.weights.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(wsize));
    model.bias.assign(theta.begin() + static_cast<std::ptrdiff_t>(wsize), theta.end());
    return model;
}

double probe_objective(const ProbeModel& model, const LabeledVectors& data, double l2_strength) {
    std::vector<double> theta(model.weights);
    theta.insert(theta.end(), model.bias.begin(), model.bias.end());
    return Objective(data, model.n_classes, l2_strength)(theta, nullptr);
}

double evaluate_probe(const ProbeModel& model, const LabeledVectors& test) {
    if (test.size() == 0) throw ArgumentError("probe test set is empty");
    if (test.dim != model.dim) throw ArgumentError("test dimension differs from probe dimension");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i)
        if (model.predict(test.row(i)) == test.labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

// ---------------------------------------------------------------------------
// Sweep

ProbeData load_hidden_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".xlga") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ValidationError("no .xlga hidden-state dumps in " + dir.string());

    ProbeData data;
    std::set<std::string> languages;
    bool first = true;
    for (const auto& path : files) {
        const auto m = actstore::read_activation_matrix(path);
        const auto& h = m.header;
        if (h.pooling != actstore::Pooling::token)
            throw ValidationError(path.string() + ": expected a token hidden-state dump (pooling = token)");
        if (first) {
            data.checkpoint_step = h.checkpoint_step;
            first = false;
        } else if (h.checkpoint_step != data.checkpoint_step) {
            throw ValidationError(path.string() + ": checkpoint step " + std::to_string(h.checkpoint_step) +
                                  " differs from " + std::to_string(data.checkpoint_step));
        }
        auto& slot = data.layers[*h.layer];
        if (slot.count(h.language))
            throw ValidationError(path.string() + ": duplicate dump for layer " + std::to_string(*h.layer) +
                                  ", language '" + h.language + "'");
        HiddenSet set;
        set.dim = static_cast<std::size_t>(h.n_cols());
        set.sample_ids = h.sample_ids;
        set.token_positions = h.token_positions;
        set.vectors.assign(m.values.begin(), m.values.end());
        slot.emplace(h.language, std::move(set));
        languages.insert(h.language);
    }
    data.languages.assign(languages.begin(), languages.end());
    return data;
}

namespace {

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double pop_std(const std::vector<double>& v) {
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size()));
}

}  // namespace

ProbeReport probe_sweep(const ProbeData& data, const SweepOptions& options) {
    if (options.seeds.empty()) throw ArgumentError("probe sweep needs at least one seed");
    if (!(options.train_fraction > 0.0 && options.train_fraction < 1.0))
        throw ArgumentError("train_fraction must lie in (0, 1)");
    if (data.layers.empty()) throw CompletenessError("probe data has no layers");
    if (data.languages.size() < 2) throw ArgumentError("probing needs at least two languages");

    const auto& languages = data.languages;
    // Reference sentence ids per language, taken from the lowest layer.
    const auto& reference = data.layers.begin()->second;
    std::vector<std::vector<std::string>> ids(languages.size());
    for (std::size_t li = 0; li < languages.size(); ++li) {
        for (const auto& [layer, per_lang] : data.layers)
            if (!per_lang.count(languages[li]))
                throw CompletenessError("layer " + std::to_string(layer) + " has no hidden states for language '" +
                                        languages[li] + "'");
        ids[li] = reference.at(languages[li]).sample_ids;
        std::sort(ids[li].begin(), ids[li].end());
        if (ids[li].size() < 2)
            throw ArgumentError("language '" + languages[li] + "' needs at least two sentences for a split");
    }

    // splits[seed][language] = (train ids, test ids)
    struct Split {
        std::vector<std::string> train, test;
    };
    std::vector<std::vector<Split>> splits(options.seeds.size(), std::vector<Split>(languages.size()));
    for (std::size_t si = 0; si < options.seeds.size(); ++si)
        for (std::size_t li = 0; li < languages.size(); ++li) {
            auto order = ids[li];
            Rng::stream(options.base_seed,
                        "probe/split/seed" + std::to_string(options.seeds[si]) + "/" + languages[li])
                .shuffle(order.begin(), order.end());
            auto n_train = static_cast<std::size_t>(std::llround(options.train_fraction * static_cast<double>(order.size())));
            n_train = std::clamp<std::size_t>(n_train, 1, order.size() - 1);
            splits[si][li].train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
            splits[si][li].test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
        }

    std::vector<std::uint32_t> layer_ids;
    for (const auto& [layer, _] : data.layers) layer_ids.push_back(layer);
    const std::size_t n_seeds = options.seeds.size();
    std::vector<double> acc(layer_ids.size() * n_seeds);
    std::vector<char> converged(acc.size(), 1);

    parallel_for(acc.size(), options.workers, [&](std::size_t cell) {
        const auto layer = layer_ids[cell / n_seeds];
        const auto si = cell % n_seeds;
        const auto& per_lang = data.layers.at(layer);
        LabeledVectors train, test;
        for (std::size_t li = 0; li < languages.size(); ++li) {
            const auto& set = per_lang.at(languages[li]);
            std::unordered_map<std::string_view, std::size_t> row_of;
            for (std::size_t r = 0; r < set.sample_ids.size(); ++r) row_of.emplace(set.sample_ids[r], r);
            const auto add = [&](LabeledVectors& dst, const std::string& id) {
                const auto it = row_of.find(id);
                if (it == row_of.end())
                    throw CompletenessError("layer " + std::to_string(layer) + ", language '" + languages[li] +
                                            "': missing sentence '" + id + "'");
                dst.push_back(std::span<const double>(set.vectors).subspan(it->second * set.dim, set.dim),
                              static_cast<std::uint32_t>(li));
            };
            for (const auto& id : splits[si][li].train) add(train, id);
            for (const auto& id : splits[si][li].test) add(test, id);
        }
        TrainOptions topt;
        topt.l2_strength = options.l2_strength.value_or(1.0 / static_cast<double>(train.size()));
        topt.max_iters = options.max_iters;
        topt.tol = options.tol;
        const auto model = train_probe(train, topt);
        acc[cell] = evaluate_probe(model, test);
        converged[cell] = model.converged ? 1 : 0;
    });

    ProbeReport report;
    report.checkpoint_step = data.checkpoint_step;
    report.languages = languages;
    report.seeds = options.seeds;
    report.train_fraction = options.train_fraction;
    for (std::size_t l = 0; l < layer_ids.size(); ++l) {
        LayerAccuracy la;
        la.layer = layer_ids[l];
        for (std::size_t si = 0; si < n_seeds; ++si) {
            la.accuracy.push_back(acc[l * n_seeds + si]);
            la.converged = la.converged && converged[l * n_seeds + si];
        }
        la.mean = mean_of(la.accuracy);
        la.std = pop_std(la.accuracy);
        report.layers.push_back(std::move(la));
    }
    std::vector<double> means, stds, firsts;
    for (std::size_t si = 0; si < n_seeds; ++si) {
        std::vector<double> across;
        for (const auto& la : report.layers) across.push_back(la.accuracy[si]);
        SeedAggregate agg{options.seeds[si], mean_of(across), pop_std(across), across.front()};
        means.push_back(agg.mean);
        stds.push_back(agg.std);
        firsts.push_back(agg.first_layer);
        report.per_seed.push_back(agg);
    }
    report.mean = mean_of(means);
    report.std = mean_of(stds);
    report.first_layer = mean_of(firsts);
    return report;
}

std::string report_to_json(const ProbeReport& r) {
    ojson j;
    j["kind"] = "probe_report";
    j["version"] = 1;
    j["checkpoint_step"] = r.checkpoint_step;
    j["languages"] = r.languages;
    j["seeds"] = r.seeds;
    j["train_fraction"] = r.train_fraction;
    j["layers"] = ojson::array();
    for (const auto& la : r.layers)
        j["layers"].push_back({{"layer", la.layer},
                               {"accuracy", la.accuracy},
                               {"mean", la.mean},
                               {"std", la.std},
                               {"converged", la.converged}});
    j["per_seed"] = ojson::array();
    for (const auto& s : r.per_seed)
        j["per_seed"].push_back({{"seed", s.seed}, {"mean", s.mean}, {"std", s.std}, {"first_layer", s.first_layer}});
    j["aggregates"] = {{"mean", r.mean}, {"std", r.std}, {"first_layer", r.first_layer}};
    return j.dump(2) + "\n";
}

ProbeReport report_from_json(std::string_view text, std::string_view source) {
    const std::string src(source);
    ojson j;
    try {
        j = ojson::parse(text);
    } catch (const nlohmann::json::parse_error&) {
        throw ParseError(src + ": malformed JSON");
    }
    ProbeReport r;
    try {
        if (j.at("kind") != "probe_report") throw ValidationError(src + ": not a probe report");
        r.checkpoint_step = j.at("checkpoint_step").get<std::int64_t>();
        r.languages = j.at("languages").get<std::vector<std::string>>();
        r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        r.train_fraction = j.at("train_fraction").get<double>();
        for (const auto& la : j.at("layers")) {
            LayerAccuracy a;
            a.layer = la.at("layer").get<std::uint32_t>();
            a.accuracy = la.at("accuracy").get<std::vector<double>>();
            a.mean = la.at("mean").get<double>();
            a.std = la.at("std").get<double>();
            a.converged = la.at("converged").get<bool>();
            if (a.accuracy.size() != r.seeds.size())
                throw ValidationError(src + ": layer " + std::to_string(a.layer) + " has wrong accuracy count");
            r.layers.push_back(std::move(a));
        }
        for (const auto& s : j.at("per_seed"))
            r.per_seed.push_back({s.at("seed").get<std::uint64_t>(), s.at("mean").get<double>(),
                                  s.at("std").get<double>(), s.at("first_layer").get<double>()});
        const auto& agg = j.at("aggregates");
        r.mean = agg.at("mean").get<double>();
        r.std = agg.at("std").get<double>();
        r.first_layer = agg.at("first_layer").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(src + ": schema mismatch: " + e.what());
    }
    return r;
}

std::string report_to_csv(const ProbeReport& r) {
    std::string out = "layer,mean,std";
    for (auto s : r.seeds) out += ",seed_" + std::to_string(s);
    out += "\n";
    for (const auto& la : r.layers) {
        out += std::to_string(la.layer) + "," + align::format_double(la.mean) + "," + align::format_double(la.std);
        for (double a : la.accuracy) out += "," + align::format_double(a);
        out += "\n";
    }
    return out;
}

}  // namespace xlg::probe
