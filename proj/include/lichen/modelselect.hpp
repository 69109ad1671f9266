#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lichen/features.hpp"
#include "lichen/imaging.hpp"
#include "lichen/learners.hpp"
#include "lichen/slic.hpp"

namespace lichen::modelselect {

// Lichen is the positive class.
struct ConfusionCounts {
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::int64_t total() const { return tp + fp + tn + fn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o);
    bool operator==(const ConfusionCounts&) const = default;
};

// 0 whenever a factor of the denominator is zero.
double mcc(const ConfusionCounts& c);

struct Precision {
    double value = 0;
    bool defined = false; // false when nothing was predicted positive
};
Precision precision(const ConfusionCounts& c);

ConfusionCounts maskConfusion(const BinaryMask& pred, const BinaryMask& truth);
ConfusionCounts labelConfusion(const std::vector<int>& pred, const std::vector<int>& truth);

// One hyperparameter combination of either family.
struct Candidate {
    learners::Family family = learners::Family::Svm;
    learners::SvmParams svm;
    learners::ForestParams forest;

    std::string describe() const;
    double costKey() const; // C for SVM, tree count for forests
};

// Published grids with combinations that differ only in unused parameters
// (degree outside poly, gamma for linear) collapsed: 66 SVM and 6 forest.
std::vector<Candidate> svmGrid();
std::vector<Candidate> forestGrid(std::uint64_t seed = 0);
Candidate defaultSvm();
Candidate defaultForest(std::uint64_t seed = 0);

// Fold index per row; each class is shuffled and dealt round-robin.
std::vector<int> stratifiedFolds(const std::vector<int>& labels, int folds, std::uint64_t seed);

struct CvResult {
    int bestIndex = -1;
    std::vector<double> meanMcc; // per candidate; NaN if every fold failed
};

// Mean validation MCC per candidate over stratified folds. Ties go to the
// lower cost key, then to the earlier grid position.
CvResult crossValidate(const features::LabeledTable& table, const std::vector<Candidate>& grid, std::uint64_t seed,
                       int folds = 5);

struct ImageSample {
    std::string id;
    Raster image;
    BinaryMask truth;
};

struct ImageScore {
    std::string id;
    ConfusionCounts counts;
    double mcc = 0;
    Precision precision;
};

std::vector<ImageScore> evaluate(const learners::TrainedModel& m, const std::vector<ImageSample>& test);

struct SweepConfig {
    std::vector<slic::SlicParams> slicGrid = slic::sweepGrid();
    features::FeatureOptions features;
    double labelThreshold = 0.5;
    bool crossValidate = false;
    int folds = 5;
    std::uint64_t seed = 0;
    int workers = 0; // 0 = OpenMP default
    Candidate svm = defaultSvm();
    Candidate forest = defaultForest();
    std::vector<Candidate> svmCandidates = svmGrid();
    std::vector<Candidate> forestCandidates = forestGrid();
};

struct SweepEntry {
    learners::Family family = learners::Family::Svm;
    slic::SlicParams slic;
    std::string hyperparameters;
    bool ok = false;
    std::string error;
    double meanMcc = 0;
    double meanPrecision = 0;
    std::vector<ImageScore> images;
    double trainSeconds = 0;
    std::optional<learners::TrainedModel> model;
};

struct SweepReport {
    std::vector<SweepEntry> entries; // SLIC config major, SVM then forest
};

features::LabeledTable buildTable(const std::vector<ImageSample>& images, const slic::SlicParams& sp,
                                  const features::FeatureOptions& fo, double threshold = 0.5);

// Per SLIC configuration: build tables, optionally cross-validate, train
// both families, classify the test images. A failing entry is recorded and
// the sweep moves on.
SweepReport runSweep(const std::vector<ImageSample>& train, const std::vector<ImageSample>& test,
                     const SweepConfig& cfg);

// Highest mean MCC among successful entries; ties go to fewer SLIC segments,
// then SVM, then report order. Throws ModelFailure when nothing succeeded.
std::size_t selectBestIndex(const SweepReport& r);
const learners::TrainedModel& selectBest(const SweepReport& r);

void writeReportCsv(std::ostream& os, const SweepReport& r, bool withTimings = false);
std::string summary(const SweepReport& r);

} // namespace lichen::modelselect
