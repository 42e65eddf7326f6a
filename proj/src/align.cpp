#include "xlg/align.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include <json.hpp>

#include "xlg/error.hpp"
#include "xlg/parallel.hpp"

namespace xlg::align {

using ojson = nlohmann::ordered_json;

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ArgumentError("pearson needs vectors of equal length");
    if (x.size() < 2) throw UndefinedMetricError("pearson needs at least two observations");
    const double n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw UndefinedMetricError("correlation undefined for a constant vector");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double pearson(const expert::ExpertScoreVector& a, const expert::ExpertScoreVector& b) {
    if (!(a.layout == b.layout)) throw ArgumentError("expert vectors have different layouts");
    return pearson(a.scores, b.scores);
}

double fisher_z_average(std::span<const double> rs, Diagnostics* diag) {
    if (rs.empty()) throw ArgumentError("fisher_z_average of an empty list");
    double sum = 0.0;
    for (double r : rs) {
        if (std::isnan(r)) throw ArgumentError("fisher_z_average: NaN correlation");
        if (std::fabs(r) >= 1.0) {
            const double clamped = std::copysign(kFisherClamp, r);
            if (diag)
                diag->warnings.push_back("correlation " + format_double(r) + " clamped to " +
                                         format_double(clamped) + " before Fisher transform");
            r = clamped;
        }
        sum += std::atanh(r);
    }
    return std::tanh(sum / static_cast<double>(rs.size()));
}

double overlap_proportion(const expert::TopKSet& s1, const expert::TopKSet& s2) {
    if (s1.k != s2.k) throw ArgumentError("overlap needs equal k (" + std::to_string(s1.k) + " vs " +
                                          std::to_string(s2.k) + ")");
    if (s1.k == 0) throw ArgumentError("overlap needs k >= 1");
    std::vector<std::uint64_t> a(s1.members), b(s2.members);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<std::uint64_t> common;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    return static_cast<double>(common.size()) / static_cast<double>(s1.k);
}

std::vector<double> layer_overlap(const expert::TopKSet& s1, const expert::TopKSet& s2,
                                  const actstore::LayerLayout& layout) {
    if (s1.k != s2.k) throw ArgumentError("overlap needs equal k");
    if (s1.k == 0) throw ArgumentError("overlap needs k >= 1");
    std::vector<std::uint64_t> a(s1.members), b(s2.members);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<std::uint64_t> common;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    std::vector<std::size_t> counts(layout.layers(), 0);
    for (auto g : common) {
        if (g >= layout.total()) throw ArgumentError("neuron " + std::to_string(g) + " outside layout");
        ++counts[layout.locate(g).layer];
    }
    std::vector<double> out(layout.layers());
    for (std::size_t l = 0; l < out.size(); ++l)
        out[l] = static_cast<double>(counts[l]) / static_cast<double>(s1.k);
    return out;
}

LayerProfile layer_profile(const TopKTable& top_sets, const actstore::LayerLayout& layout) {
    if (top_sets.empty()) throw ArgumentError("layer profile needs at least one top-k set");
    LayerProfile p;
    p.k = top_sets.begin()->second.k;
    p.layer_sizes = layout.layer_sizes();
    const std::size_t layers = layout.layers();
    p.expert_fraction.assign(layers, 0.0);
    p.cross_lingual_overlap.assign(layers, 0.0);

    for (const auto& [cell, set] : top_sets) {
        if (set.k != p.k || set.members.size() != p.k)
            throw ArgumentError("top-k sets disagree on k (concept '" + cell.first + "', language '" +
                                cell.second + "')");
        std::vector<std::size_t> counts(layers, 0);
        for (auto g : set.members) {
            if (g >= layout.total())
                throw ArgumentError("neuron " + std::to_string(g) + " outside layout (concept '" +
                                    cell.first + "', language '" + cell.second + "')");
            ++counts[layout.locate(g).layer];
        }
        for (std::size_t l = 0; l < layers; ++l)
            p.expert_fraction[l] += static_cast<double>(counts[l]) / static_cast<double>(p.k);
    }
    for (auto& f : p.expert_fraction) f /= static_cast<double>(top_sets.size());

    // Group by concept; the map is ordered by (concept, language).
    for (auto it = top_sets.begin(); it != top_sets.end();) {
        auto end = it;
        while (end != top_sets.end() && end->first.first == it->first.first) ++end;
        for (auto a = it; a != end; ++a)
            for (auto b = std::next(a); b != end; ++b) {
                const auto per_layer = layer_overlap(a->second, b->second, layout);
                for (std::size_t l = 0; l < layers; ++l) p.cross_lingual_overlap[l] += per_layer[l];
                ++p.language_pairs;
            }
        it = end;
    }
    if (p.language_pairs)
        for (auto& v : p.cross_lingual_overlap) v /= static_cast<double>(p.language_pairs);
    return p;
}

std::string to_string(Metric m) {
    switch (m) {
        case Metric::correlation: return "correlation";
        case Metric::mutual_information: return "mutual_information";
        case Metric::overlap: return "overlap";
    }
    return "?";
}

Metric parse_metric(std::string_view t) {
    if (t == "corr" || t == "correlation") return Metric::correlation;
    if (t == "mi" || t == "mutual_information") return Metric::mutual_information;
    if (t == "overlap") return Metric::overlap;
    throw ArgumentError("unknown metric '" + std::string(t) + "'");
}

AlignmentReport build_alignment_report(const ScoreTable& vectors, const AlignOptions& options) {
    if (vectors.empty()) throw ArgumentError("alignment needs at least one expert score vector");
    AlignmentReport report;
    report.k = options.k;
    report.mi_neighbors = options.mi_neighbors;

    std::set<std::string> concept_set, language_set;
    for (const auto& [cell, _] : vectors) {
        concept_set.insert(cell.first);
        language_set.insert(cell.second);
    }
    report.concepts.assign(concept_set.begin(), concept_set.end());
    if (options.languages.empty()) {
        report.languages.assign(language_set.begin(), language_set.end());
    } else {
        // An explicit list selects languages as well as ordering them.
        std::set<std::string> listed;
        for (const auto& l : options.languages)
            if (!listed.insert(l).second) throw ArgumentError("language '" + l + "' listed twice");
        report.languages = options.languages;
    }
    const auto& first = vectors.begin()->second;
    report.checkpoint_step = first.checkpoint_step;
    for (const auto& c : report.concepts)
        for (const auto& l : report.languages) {
            const auto it = vectors.find({c, l});
            if (it == vectors.end())
                throw CompletenessError("missing expert scores for concept '" + c + "' in language '" + l + "'");
            if (!(it->second.layout == first.layout))
                throw ArgumentError("concept '" + c + "' / '" + l + "': layer layout differs");
            if (it->second.checkpoint_step != first.checkpoint_step)
                throw ArgumentError("concept '" + c + "' / '" + l + "': checkpoint step differs");
        }

    const auto wants = [&](Metric m) {
        return std::find(options.metrics.begin(), options.metrics.end(), m) != options.metrics.end();
    };
    const std::size_t n_lang = report.languages.size();
    const std::size_t n_concepts = report.concepts.size();
    const auto at = [&](std::size_t c, std::size_t l) -> const expert::ExpertScoreVector& {
        return vectors.at({report.concepts[c], report.languages[l]});
    };

    // Top-k sets per (concept, language).
    std::vector<expert::TopKSet> tops(n_concepts * n_lang);
    parallel_for(tops.size(), options.workers,
                 [&](std::size_t i) { tops[i] = expert::top_k(at(i / n_lang, i % n_lang), options.k); });

    struct Pair {
        std::size_t a, b;
    };
    std::vector<Pair> pairs;
    for (std::size_t a = 0; a < n_lang; ++a)
        for (std::size_t b = a + 1; b < n_lang; ++b) pairs.push_back({a, b});

    // One cell per (concept, language pair); filled in parallel, reduced in order.
    struct Cell {
        double r = 0.0, mi = 0.0, overlap = 0.0;
    };
    std::vector<Cell> cells(n_concepts * pairs.size());
    parallel_for(cells.size(), options.workers, [&](std::size_t i) {
        const auto c = i / pairs.size();
        const auto& pr = pairs[i % pairs.size()];
        const auto& ea = at(c, pr.a);
        const auto& eb = at(c, pr.b);
        auto& cell = cells[i];
        if (wants(Metric::correlation)) cell.r = pearson(ea.scores, eb.scores);
        if (wants(Metric::mutual_information))
            cell.mi = mutual_information_knn(ea.scores, eb.scores, options.mi_neighbors);
        if (wants(Metric::overlap)) cell.overlap = overlap_proportion(tops[c * n_lang + pr.a], tops[c * n_lang + pr.b]);
    });

    const auto blank = [&](double diag) {
        Matrix m(n_lang, std::vector<double>(n_lang, 0.0));
        for (std::size_t l = 0; l < n_lang; ++l) m[l][l] = diag;
        return m;
    };
    const double nan = std::numeric_limits<double>::quiet_NaN();
    Diagnostics diag;
    for (Metric metric : {Metric::correlation, Metric::mutual_information, Metric::overlap}) {
        if (!wants(metric)) continue;
        Matrix m = blank(metric == Metric::mutual_information ? nan : 1.0);
        std::vector<double> all;
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            std::vector<double> values;
            for (std::size_t c = 0; c < n_concepts; ++c) {
                const auto& cell = cells[c * pairs.size() + p];
                values.push_back(metric == Metric::correlation ? cell.r
                                 : metric == Metric::mutual_information ? cell.mi
                                                                        : cell.overlap);
            }
            double avg;
            if (metric == Metric::correlation) {
                Diagnostics local;
                avg = fisher_z_average(values, &local);
                for (auto& w : local.warnings)
                    diag.warnings.push_back(report.languages[pairs[p].a] + "/" + report.languages[pairs[p].b] +
                                            ": " + w);
            } else {
                double s = 0.0;
                for (double v : values) s += v;
                avg = s / static_cast<double>(values.size());
            }
            m[pairs[p].a][pairs[p].b] = m[pairs[p].b][pairs[p].a] = avg;
            all.insert(all.end(), values.begin(), values.end());
        }
        if (!all.empty()) {
            if (metric == Metric::correlation) {
                report.summary[metric] = fisher_z_average(all);
            } else {
                double s = 0.0;
                for (double v : all) s += v;
                report.summary[metric] = s / static_cast<double>(all.size());
            }
        }
        report.matrices[metric] = std::move(m);

        if (options.keep_per_concept) {
            for (std::size_t c = 0; c < n_concepts; ++c) {
                Matrix pm = blank(metric == Metric::mutual_information ? nan : 1.0);
                for (std::size_t p = 0; p < pairs.size(); ++p) {
                    const auto& cell = cells[c * pairs.size() + p];
                    const double v = metric == Metric::correlation ? cell.r
                                     : metric == Metric::mutual_information ? cell.mi
                                                                            : cell.overlap;
                    pm[pairs[p].a][pairs[p].b] = pm[pairs[p].b][pairs[p].a] = v;
                }
                report.per_concept[report.concepts[c]][metric] = std::move(pm);
            }
        }
    }
    report.warnings = std::move(diag.warnings);

    TopKTable table;
    for (std::size_t c = 0; c < n_concepts; ++c)
        for (std::size_t l = 0; l < n_lang; ++l)
            table.emplace(std::pair{report.concepts[c], report.languages[l]}, tops[c * n_lang + l]);
    report.profile = layer_profile(table, first.layout);
    report.profile->checkpoint_step = report.checkpoint_step;
    return report;
}

// ---------------------------------------------------------------------------
// Serialization

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

ojson matrix_json(const Matrix& m) {
    ojson rows = ojson::array();
    for (const auto& row : m) {
        ojson r = ojson::array();
        for (double v : row) {
            if (std::isnan(v))
                r.push_back(nullptr);
            else
                r.push_back(v);
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

Matrix matrix_from_json(const ojson& j, std::size_t n, const std::string& where) {
    if (!j.is_array() || j.size() != n) throw ValidationError(where + ": expected " + std::to_string(n) + " rows");
    Matrix m(n, std::vector<double>(n));
    for (std::size_t r = 0; r < n; ++r) {
        if (!j[r].is_array() || j[r].size() != n)
            throw ValidationError(where + ": row " + std::to_string(r) + " must have " + std::to_string(n) + " entries");
        for (std::size_t c = 0; c < n; ++c) {
            const auto& v = j[r][c];
            if (v.is_null())
                m[r][c] = std::numeric_limits<double>::quiet_NaN();
            else if (v.is_number())
                m[r][c] = v.get<double>();
            else
                throw ValidationError(where + ": non-numeric entry");
        }
    }
    return m;
}

}  // namespace

std::string report_to_json(const AlignmentReport& report) {
    ojson j;
    j["kind"] = "alignment_report";
    j["version"] = 1;
    j["checkpoint_step"] = report.checkpoint_step;
    j["k"] = report.k;
    j["mi_neighbors"] = report.mi_neighbors;
    j["languages"] = report.languages;
    j["concepts"] = report.concepts;
    j["metrics"] = ojson::object();
    for (const auto& [metric, m] : report.matrices) j["metrics"][to_string(metric)] = matrix_json(m);
    j["summary"] = ojson::object();
    for (const auto& [metric, v] : report.summary) j["summary"][to_string(metric)] = v;
    if (report.profile) {
        const auto& p = *report.profile;
        j["layer_profile"] = {{"checkpoint_step", p.checkpoint_step},
                              {"k", p.k},
                              {"layer_sizes", p.layer_sizes},
                              {"language_pairs", p.language_pairs},
                              {"expert_fraction", p.expert_fraction},
                              {"cross_lingual_overlap", p.cross_lingual_overlap}};
    }
    if (!report.per_concept.empty()) {
        j["per_concept"] = ojson::object();
        for (const auto& [concept_id, mats] : report.per_concept)
            for (const auto& [metric, m] : mats) j["per_concept"][concept_id][to_string(metric)] = matrix_json(m);
    }
    j["warnings"] = report.warnings;
    return j.dump(2) + "\n";
}

AlignmentReport report_from_json(std::string_view text, std::string_view source) {
    const std::string src(source);
    ojson j;
    try {
        j = ojson::parse(text);
    } catch (const nlohmann::json::parse_error&) {
        throw ParseError(src + ": malformed JSON");
    }
    AlignmentReport r;
    try {
        if (j.at("kind") != "alignment_report") throw ValidationError(src + ": not an alignment report");
        r.checkpoint_step = j.at("checkpoint_step").get<std::int64_t>();
        r.k = j.at("k").get<std::size_t>();
        r.mi_neighbors = j.at("mi_neighbors").get<std::size_t>();
        r.languages = j.at("languages").get<std::vector<std::string>>();
        r.concepts = j.at("concepts").get<std::vector<std::string>>();
        for (const auto& [name, m] : j.at("metrics").items())
            r.matrices[parse_metric(name)] = matrix_from_json(m, r.languages.size(), src + ": metrics/" + name);
        for (const auto& [name, v] : j.at("summary").items()) r.summary[parse_metric(name)] = v.get<double>();
        if (j.contains("layer_profile")) {
            const auto& p = j["layer_profile"];
            LayerProfile lp;
            lp.checkpoint_step = p.at("checkpoint_step").get<std::int64_t>();
            lp.k = p.at("k").get<std::size_t>();
            lp.layer_sizes = p.at("layer_sizes").get<std::vector<std::uint32_t>>();
            lp.language_pairs = p.at("language_pairs").get<std::size_t>();
            lp.expert_fraction = p.at("expert_fraction").get<std::vector<double>>();
            lp.cross_lingual_overlap = p.at("cross_lingual_overlap").get<std::vector<double>>();
            if (lp.expert_fraction.size() != lp.layer_sizes.size() ||
                lp.cross_lingual_overlap.size() != lp.layer_sizes.size())
                throw ValidationError(src + ": layer_profile arrays disagree with layer_sizes");
            r.profile = std::move(lp);
        }
        if (j.contains("per_concept"))
            for (const auto& [concept_id, mats] : j["per_concept"].items())
                for (const auto& [name, m] : mats.items())
                    r.per_concept[concept_id][parse_metric(name)] =
                        matrix_from_json(m, r.languages.size(), src + ": per_concept/" + concept_id);
        if (j.contains("warnings")) r.warnings = j["warnings"].get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(src + ": schema mismatch: " + e.what());
    } catch (const ArgumentError& e) {
        throw ValidationError(src + ": " + e.what());
    }
    return r;
}

std::string matrix_to_csv(const std::vector<std::string>& languages, const Matrix& m) {
    std::string out = "language";
    for (const auto& l : languages) out += "," + l;
    out += "\n";
    for (std::size_t r = 0; r < languages.size(); ++r) {
        out += languages[r];
        for (double v : m[r]) out += "," + (std::isnan(v) ? std::string() : format_double(v));
        out += "\n";
    }
    return out;
}

}  // namespace xlg::align
