#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lichen/grabcut.hpp"
#include "lichen/imaging.hpp"
#include "lichen/learners.hpp"
#include "lichen/modelselect.hpp"
#include "lichen/rectify.hpp"
#include "lichen/regions.hpp"
#include "lichen/synth.hpp"

namespace lichen::pipeline {

namespace fs = std::filesystem;

enum class Stage { Raw, Rectified, Annotated, Classified, Measured };
enum class Split { Unlabeled, Train, Test };

std::string toString(Stage s);
std::string toString(Split s);
Stage parseStage(const std::string& s);
Split parseSplit(const std::string& s);

struct ImageEntry {
    std::string id;
    Stage status = Stage::Raw;
    Split split = Split::Unlabeled;
    std::optional<double> mmPerPx; // of the rectified image
    bool manualMask = false;
    std::optional<slic::SlicParams> classifiedWith; // provenance of masks/auto
    std::string error;                              // last stage failure, if any

    bool operator==(const ImageEntry&) const = default;
};

// Layout under `root`:
//   raw/ rectified/ masks/manual/ masks/auto/ features/ models/ reports/
//   manifest.json
struct DatasetManifest {
    fs::path root;
    std::uint64_t seed = 0;
    std::vector<ImageEntry> images; // sorted by id

    fs::path rawPath(const std::string& id) const;
    fs::path truthPath(const std::string& id) const; // synthetic image-frame truth
    fs::path metaPath(const std::string& id) const;
    fs::path rectifiedPath(const std::string& id) const;
    fs::path manualMaskPath(const std::string& id) const;
    fs::path sessionPath(const std::string& id) const;
    fs::path autoMaskPath(const std::string& id) const;
    fs::path modelsDir() const { return root / "models"; }
    fs::path reportsDir() const { return root / "reports"; }
    fs::path featuresDir() const { return root / "features"; }

    ImageEntry* find(const std::string& id);
    const ImageEntry* find(const std::string& id) const;
    const ImageEntry& at(const std::string& id) const; // throws NotFound
    std::vector<std::string> ids(Split s) const;
};

DatasetManifest createDataset(const fs::path& root, std::uint64_t seed = 0);
DatasetManifest loadManifest(const fs::path& root);
void saveManifest(const DatasetManifest& m);
nlohmann::json toJson(const DatasetManifest& m);

// Copies an existing photograph into raw/ under `id`.
void addRawImage(DatasetManifest& m, const std::string& id, const fs::path& source);

struct SynthOptions {
    int count = 10;
    std::uint64_t seed = 1;
    synth::Difficulty difficulty = synth::Difficulty::Medium;
    bool targets = false; // calibration scenes that must be rectified first
    bool warp = false;
    int width = 400;
    int height = 300;
};

// Writes raw/<id>.png, raw/<id>.truth.png and raw/<id>.json per scene.
// Scenes without targets are already planar, so they are also placed in
// rectified/ with their synthetic truth as the manual mask.
DatasetManifest synthesizeCorpus(const fs::path& root, const SynthOptions& opt);

struct RectifyOptions {
    HsvBounds bounds{};
    rectify::TargetLayout layout{};
};

// Rectifies every image still at the raw stage. Failures are stored on
// the entry and the run continues. Returns the number rectified.
int rectifyAll(DatasetManifest& m, const RectifyOptions& opt);

// Seeded uniform sample without replacement over all images (id order);
// everything not drawn becomes unlabeled.
void splitDataset(DatasetManifest& m, int nTrain, int nTest, std::uint64_t seed);

std::vector<modelselect::ImageSample> loadSamples(const DatasetManifest& m, Split s);

struct TrainResult {
    modelselect::SweepReport report;
    std::size_t best = 0;
};

// Runs the sweep on the train/test split, writes all 24 models, the best
// one as models/best.json, and reports/sweep.csv + reports/sweep.txt.
TrainResult train(DatasetManifest& m, const modelselect::SweepConfig& cfg);

// Classifies the unlabeled images into masks/auto. Returns the count done.
int classifyAll(DatasetManifest& m, const learners::TrainedModel& model);

struct ImageMeasurement {
    std::string id;
    std::string source; // "auto" or "manual"
    regions::RegionReport report;
};

// Measures masks/auto where present, else masks/manual; writes
// reports/thalli/<id>.csv.
std::vector<ImageMeasurement> measureAll(DatasetManifest& m, regions::MinArea minArea = {});

struct CorpusReport {
    std::vector<ImageMeasurement> images;
    int thallusCount = 0;
    std::int64_t lichenAreaPx = 0;
    std::int64_t totalPixels = 0;
    std::optional<double> lichenAreaMm2; // when every image has a scale
    std::vector<double> histogramEdgesMm2;  // or px when unscaled
    std::vector<int> histogramCounts;
    bool areaInMm2 = false;
};

// Corpus totals, a log-spaced thallus-area histogram and the five largest
// thalli per image.
CorpusReport aggregate(std::vector<ImageMeasurement> images);
void writeReport(std::ostream& summaryCsv, std::ostream& json, const CorpusReport& r);
CorpusReport report(DatasetManifest& m, regions::MinArea minArea = {});

// Scores a model on the test split against the manual masks.
std::vector<modelselect::ImageScore> evaluateTestSet(const DatasetManifest& m, const learners::TrainedModel& model);

// ---- Annotation ---------------------------------------------------------------

// Base rectangle plus an undoable history of stroke batches. The mask is
// always segment(applyStrokes(initTrimap(rect), all strokes)), so replaying
// the history from scratch reproduces it exactly.
class AnnotationSession {
public:
    AnnotationSession(std::string imageId, Raster image, grabcut::Params params = {});

    const BinaryMask& init(const grabcut::Rect& rect);
    const BinaryMask& addStrokes(const std::vector<grabcut::Stroke>& batch);
    const BinaryMask& undo();

    bool initialized() const { return rect_.has_value(); }
    const std::string& imageId() const { return id_; }
    const BinaryMask& mask() const;
    int historyDepth() const { return static_cast<int>(history_.size()); }
    int iterations() const { return iterations_; }
    int version() const { return version_; }
    const Raster& image() const { return image_; }

    nlohmann::json historyJson() const;

private:
    void recompute();

    std::string id_;
    Raster image_;
    grabcut::Params params_;
    std::optional<grabcut::Rect> rect_;
    std::vector<std::vector<grabcut::Stroke>> history_;
    BinaryMask mask_;
    int iterations_ = 0;
    int version_ = 0;
};

nlohmann::json strokeToJson(const grabcut::Stroke& s);
grabcut::Stroke strokeFromJson(const nlohmann::json& j);

// Re-executes a persisted history (rectangle, stroke batches and GrabCut
// parameters) on the image.
BinaryMask replayHistory(const Raster& image, const nlohmann::json& history);

} // namespace lichen::pipeline
