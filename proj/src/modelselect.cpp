#include "lichen/modelselect.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>

#include "lichen/error.hpp"
#include "lichen/rng.hpp"

namespace lichen::modelselect {

using learners::Family;

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
}

double mcc(const ConfusionCounts& c) {
    const std::int64_t a = c.tp + c.fp, b = c.tp + c.fn, d = c.tn + c.fp, e = c.tn + c.fn;
    if (a == 0 || b == 0 || d == 0 || e == 0) return 0.0;
    // Each pair product stays below 2^53 for counts up to ~10^7 pixels per cell.
    const double den = std::sqrt(static_cast<double>(a) * static_cast<double>(b)) *
                       std::sqrt(static_cast<double>(d) * static_cast<double>(e));
    const long double num = static_cast<long double>(c.tp) * c.tn - static_cast<long double>(c.fp) * c.fn;
    const double r = static_cast<double>(num / den);
    return std::clamp(r, -1.0, 1.0);
}

Precision precision(const ConfusionCounts& c) {
    if (c.tp + c.fp == 0) return {0.0, false};
    return {static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp), true};
}

ConfusionCounts maskConfusion(const BinaryMask& pred, const BinaryMask& truth) {
    if (pred.width() != truth.width() || pred.height() != truth.height())
        throw InvalidArgument("maskConfusion: prediction and truth differ in size");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] != 0, t = truth[i] != 0;
        if (p && t)
            ++c.tp;
        else if (p)
            ++c.fp;
        else if (t)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

ConfusionCounts labelConfusion(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size()) throw InvalidArgument("labelConfusion: length mismatch");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] && truth[i])
            ++c.tp;
        else if (pred[i])
            ++c.fp;
        else if (truth[i])
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

std::string Candidate::describe() const {
    return family == Family::Svm ? svm.describe() : forest.describe();
}

double Candidate::costKey() const {
    return family == Family::Svm ? svm.C : static_cast<double>(forest.nEstimators);
}

std::vector<Candidate> svmGrid() {
    using learners::GammaMode;
    using learners::Kernel;
    std::vector<Candidate> out;
    for (double C : {1.0, 10.0, 100.0})
        for (Kernel k : {Kernel::Rbf, Kernel::Linear, Kernel::Poly})
            for (int degree : {2, 3, 4, 5}) {
                if (k != Kernel::Poly && degree != 3) continue;
                for (GammaMode g : {GammaMode::Scale, GammaMode::Auto}) {
                    if (k == Kernel::Linear && g != GammaMode::Scale) continue;
                    for (int maxIter : {500, 1000}) {
                        Candidate c;
                        c.family = Family::Svm;
                        c.svm.C = C;
                        c.svm.kernel = k;
                        c.svm.degree = degree;
                        c.svm.gamma = g;
                        c.svm.maxIter = maxIter;
                        out.push_back(c);
                    }
                }
            }
    return out;
}

std::vector<Candidate> forestGrid(std::uint64_t seed) {
    std::vector<Candidate> out;
    for (int n : {150, 100, 50})
        for (auto crit : {learners::Criterion::Gini, learners::Criterion::Entropy}) {
            Candidate c;
            c.family = Family::Forest;
            c.forest.nEstimators = n;
            c.forest.criterion = crit;
            c.forest.seed = seed;
            out.push_back(c);
        }
    return out;
}

Candidate defaultSvm() {
    Candidate c;
    c.family = Family::Svm; // C=1, rbf, gamma=scale, max_iter=-1
    return c;
}

Candidate defaultForest(std::uint64_t seed) {
    Candidate c;
    c.family = Family::Forest; // 100 trees, gini
    c.forest.seed = seed;
    return c;
}

std::vector<int> stratifiedFolds(const std::vector<int>& labels, int folds, std::uint64_t seed) {
    if (folds < 2) throw InvalidArgument("stratifiedFolds: need at least two folds");
    std::vector<int> byClass[2];
    for (int i = 0; i < static_cast<int>(labels.size()); ++i) byClass[labels[i] ? 1 : 0].push_back(i);
    for (const auto& c : byClass)
        if (static_cast<int>(c.size()) < folds)
            throw InvalidTrainingSet("cross-validation needs at least " + std::to_string(folds) + " rows per class");
    Rng rng(seed);
    std::vector<int> fold(labels.size(), 0);
    for (auto& c : byClass) {
        rng.shuffle(c.begin(), c.end());
        for (std::size_t k = 0; k < c.size(); ++k) fold[c[k]] = static_cast<int>(k % folds);
    }
    return fold;
}

namespace {

learners::TrainedModel fit(const features::LabeledTable& t, const Candidate& c) {
    return learners::train(t, c.family, c.svm, c.forest);
}

} // namespace

CvResult crossValidate(const features::LabeledTable& table, const std::vector<Candidate>& grid, std::uint64_t seed,
                       int folds) {
    if (grid.empty()) throw InvalidArgument("crossValidate: empty grid");
    const std::vector<int> fold = stratifiedFolds(table.labels, folds, seed);

    std::vector<features::LabeledTable> trainPart(folds), validPart(folds);
    for (int f = 0; f < folds; ++f) {
        trainPart[f].slic = validPart[f].slic = table.slic;
        trainPart[f].features = validPart[f].features = table.features;
        for (std::size_t i = 0; i < table.rows.size(); ++i) {
            auto& dst = fold[i] == f ? validPart[f] : trainPart[f];
            dst.rows.push_back(table.rows[i]);
            dst.labels.push_back(table.labels[i]);
        }
    }

    const int jobs = static_cast<int>(grid.size()) * folds;
    std::vector<double> score(jobs, std::numeric_limits<double>::quiet_NaN());
#pragma omp parallel for schedule(dynamic)
    for (int job = 0; job < jobs; ++job) {
        const int g = job / folds, f = job % folds;
        try {
            const auto m = fit(trainPart[f], grid[g]);
            score[job] = mcc(labelConfusion(learners::predict(m, validPart[f].rows), validPart[f].labels));
        } catch (const Error&) {
        }
    }

    CvResult r;
    r.meanMcc.resize(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
        double sum = 0;
        int n = 0;
        for (int f = 0; f < folds; ++f)
            if (!std::isnan(score[g * folds + f])) {
                sum += score[g * folds + f];
                ++n;
            }
        r.meanMcc[g] = n ? sum / n : std::numeric_limits<double>::quiet_NaN();
        if (std::isnan(r.meanMcc[g])) continue;
        if (r.bestIndex < 0) {
            r.bestIndex = static_cast<int>(g);
            continue;
        }
        const double best = r.meanMcc[r.bestIndex];
        if (r.meanMcc[g] > best || (r.meanMcc[g] == best && grid[g].costKey() < grid[r.bestIndex].costKey()))
            r.bestIndex = static_cast<int>(g);
    }
    if (r.bestIndex < 0) throw ModelFailure("cross-validation: every candidate failed");
    return r;
}

namespace {

struct Prepared {
    std::vector<slic::SuperpixelMap> spx;
    std::vector<std::vector<features::FeatureRow>> rows;
};

ImageScore score(const std::string& id, const BinaryMask& pred, const BinaryMask& truth) {
    ImageScore s;
    s.id = id;
    s.counts = maskConfusion(pred, truth);
    s.mcc = mcc(s.counts);
    s.precision = precision(s.counts);
    return s;
}

void summarize(SweepEntry& e) {
    double m = 0, p = 0;
    for (const auto& s : e.images) {
        m += s.mcc;
        p += s.precision.value;
    }
    const double n = static_cast<double>(std::max<std::size_t>(1, e.images.size()));
    e.meanMcc = m / n;
    e.meanPrecision = p / n;
}

} // namespace

std::vector<ImageScore> evaluate(const learners::TrainedModel& m, const std::vector<ImageSample>& test) {
    std::vector<ImageScore> out;
    for (const auto& s : test) out.push_back(score(s.id, learners::classifyImage(m, s.image), s.truth));
    return out;
}

features::LabeledTable buildTable(const std::vector<ImageSample>& images, const slic::SlicParams& sp,
                                  const features::FeatureOptions& fo, double threshold) {
    features::LabeledTable t;
    t.slic = sp;
    t.features = fo;
    t.threshold = threshold;
    for (const auto& s : images) {
        const slic::SuperpixelMap spx = slic::slic(s.image, sp);
        t.append(features::extractFeatures(s.image, spx, fo, s.id), features::labelSegments(spx, s.truth, threshold));
    }
    return t;
}

SweepReport runSweep(const std::vector<ImageSample>& train, const std::vector<ImageSample>& test,
                     const SweepConfig& cfg) {
    if (train.empty() || test.empty()) throw InvalidArgument("runSweep: train and test sets must be non-empty");
    const int nConfig = static_cast<int>(cfg.slicGrid.size());
    SweepReport report;
    report.entries.resize(2 * nConfig);
    const int workers = cfg.workers > 0 ? cfg.workers : maxThreads();

#pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (int k = 0; k < nConfig; ++k) {
        const slic::SlicParams& sp = cfg.slicGrid[k];
        SweepEntry* entry[2] = {&report.entries[2 * k], &report.entries[2 * k + 1]};
        entry[0]->family = Family::Svm;
        entry[1]->family = Family::Forest;
        for (auto* e : entry) e->slic = sp;

        features::LabeledTable table;
        Prepared prep;
        try {
            table = buildTable(train, sp, cfg.features, cfg.labelThreshold);
            for (const auto& s : test) {
                prep.spx.push_back(slic::slic(s.image, sp));
                prep.rows.push_back(features::extractFeatures(s.image, prep.spx.back(), cfg.features, s.id));
            }
        } catch (const std::exception& ex) {
            for (auto* e : entry) e->error = ex.what();
            continue;
        }

        for (int f = 0; f < 2; ++f) {
            SweepEntry& e = *entry[f];
            try {
                Candidate c = f == 0 ? cfg.svm : cfg.forest;
                if (cfg.crossValidate) {
                    std::vector<Candidate> grid = f == 0 ? cfg.svmCandidates : cfg.forestCandidates;
                    for (auto& g : grid) g.forest.seed = cfg.seed;
                    c = grid[crossValidate(table, grid, cfg.seed, cfg.folds).bestIndex];
                }
                c.forest.seed = cfg.seed;
                e.hyperparameters = c.describe();
                const auto t0 = std::chrono::steady_clock::now();
                learners::TrainedModel m = fit(table, c);
                e.trainSeconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                for (std::size_t i = 0; i < test.size(); ++i) {
                    const BinaryMask pred = features::paintSegments(prep.spx[i], learners::predict(m, prep.rows[i]));
                    e.images.push_back(score(test[i].id, pred, test[i].truth));
                }
                summarize(e);
                e.model = std::move(m);
                e.ok = true;
            } catch (const std::exception& ex) {
                e.error = ex.what();
                e.images.clear();
            }
        }
    }
    return report;
}

std::size_t selectBestIndex(const SweepReport& r) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < r.entries.size(); ++i) {
        const SweepEntry& e = r.entries[i];
        if (!e.ok) continue;
        if (!best) {
            best = i;
            continue;
        }
        const SweepEntry& b = r.entries[*best];
        if (e.meanMcc != b.meanMcc) {
            if (e.meanMcc > b.meanMcc) best = i;
            continue;
        }
        if (e.slic.nSegments != b.slic.nSegments) {
            if (e.slic.nSegments < b.slic.nSegments) best = i;
            continue;
        }
        if (e.family == Family::Svm && b.family == Family::Forest) best = i;
    }
    if (!best) throw ModelFailure("sweep produced no usable model");
    return *best;
}

const learners::TrainedModel& selectBest(const SweepReport& r) {
    return *r.entries[selectBestIndex(r)].model;
}

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string csvSafe(std::string s) {
    for (char& ch : s)
        if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
    return s;
}

} // namespace

void writeReportCsv(std::ostream& os, const SweepReport& r, bool withTimings) {
    os << "family,n_segments,compactness,sigma,hyperparameters,status,mean_mcc,mean_precision,image_mcc";
    if (withTimings) os << ",train_seconds";
    os << '\n';
    for (const auto& e : r.entries) {
        os << learners::toString(e.family) << ',' << e.slic.nSegments << ',' << num(e.slic.compactness) << ','
           << num(e.slic.sigma) << ',' << csvSafe(e.hyperparameters) << ','
           << (e.ok ? std::string("ok") : "failed: " + csvSafe(e.error)) << ',';
        if (e.ok) {
            os << num(e.meanMcc) << ',' << num(e.meanPrecision) << ',';
            for (std::size_t i = 0; i < e.images.size(); ++i) os << (i ? ";" : "") << num(e.images[i].mcc);
        } else {
            os << ",,";
        }
        if (withTimings) os << ',' << num(e.trainSeconds);
        os << '\n';
    }
}

std::string summary(const SweepReport& r) {
    std::ostringstream os;
    int ok = 0;
    for (const auto& e : r.entries) ok += e.ok;
    os << r.entries.size() << " models, " << ok << " trained\n";
    for (const auto& e : r.entries) {
        char line[256];
        std::snprintf(line, sizeof line, "  %-6s slic=%d/%g/%g  %s", learners::toString(e.family).c_str(),
                      e.slic.nSegments, e.slic.compactness, e.slic.sigma,
                      e.ok ? ("mcc=" + num(e.meanMcc) + " precision=" + num(e.meanPrecision)).c_str()
                           : ("FAILED " + e.error).c_str());
        os << line << "  [" << e.hyperparameters << "]\n";
    }
    if (ok) {
        const SweepEntry& b = r.entries[selectBestIndex(r)];
        os << "best: " << learners::toString(b.family) << " slic=" << b.slic.nSegments << '/' << b.slic.compactness
           << '/' << b.slic.sigma << " mcc=" << num(b.meanMcc) << " [" << b.hyperparameters << "]\n";
    }
    return os.str();
}

} // namespace lichen::modelselect
