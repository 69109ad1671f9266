#include "lichen/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "lichen/error.hpp"
#include "lichen/rng.hpp"

namespace lichen::pipeline {

using nlohmann::json;

std::string toString(Stage s) {
    switch (s) {
    case Stage::Raw: return "raw";
    case Stage::Rectified: return "rectified";
    case Stage::Annotated: return "annotated";
    case Stage::Classified: return "classified";
    case Stage::Measured: return "measured";
    }
    return "?";
}

std::string toString(Split s) {
    switch (s) {
    case Split::Unlabeled: return "unlabeled";
    case Split::Train: return "train";
    case Split::Test: return "test";
    }
    return "?";
}

Stage parseStage(const std::string& s) {
    for (Stage v : {Stage::Raw, Stage::Rectified, Stage::Annotated, Stage::Classified, Stage::Measured})
        if (toString(v) == s) return v;
    throw InvalidArgument("unknown stage '" + s + "'");
}

Split parseSplit(const std::string& s) {
    for (Split v : {Split::Unlabeled, Split::Train, Split::Test})
        if (toString(v) == s) return v;
    throw InvalidArgument("unknown split '" + s + "'");
}

// ---- Manifest --------------------------------------------------------------------

fs::path DatasetManifest::rawPath(const std::string& id) const { return root / "raw" / (id + ".png"); }
fs::path DatasetManifest::truthPath(const std::string& id) const { return root / "raw" / (id + ".truth.png"); }
fs::path DatasetManifest::metaPath(const std::string& id) const { return root / "raw" / (id + ".json"); }
fs::path DatasetManifest::rectifiedPath(const std::string& id) const { return root / "rectified" / (id + ".png"); }
fs::path DatasetManifest::manualMaskPath(const std::string& id) const {
    return root / "masks" / "manual" / (id + ".png");
}
fs::path DatasetManifest::sessionPath(const std::string& id) const {
    return root / "masks" / "manual" / (id + ".session.json");
}
fs::path DatasetManifest::autoMaskPath(const std::string& id) const { return root / "masks" / "auto" / (id + ".png"); }

ImageEntry* DatasetManifest::find(const std::string& id) {
    for (auto& e : images)
        if (e.id == id) return &e;
    return nullptr;
}

const ImageEntry* DatasetManifest::find(const std::string& id) const {
    return const_cast<DatasetManifest*>(this)->find(id);
}

const ImageEntry& DatasetManifest::at(const std::string& id) const {
    const ImageEntry* e = find(id);
    if (!e) throw NotFound("unknown image '" + id + "'");
    return *e;
}

std::vector<std::string> DatasetManifest::ids(Split s) const {
    std::vector<std::string> out;
    for (const auto& e : images)
        if (e.split == s) out.push_back(e.id);
    return out;
}

namespace {

constexpr int kManifestVersion = 1;
const char* const kDirs[] = {"raw", "rectified", "masks/manual", "masks/auto", "features", "models", "reports"};

json slicJson(const slic::SlicParams& p) {
    return {{"n_segments", p.nSegments}, {"compactness", p.compactness}, {"sigma", p.sigma}};
}

slic::SlicParams slicFromJson(const json& j) {
    slic::SlicParams p;
    p.nSegments = j.at("n_segments");
    p.compactness = j.at("compactness");
    p.sigma = j.at("sigma");
    return p;
}

void sortImages(DatasetManifest& m) {
    std::sort(m.images.begin(), m.images.end(), [](const ImageEntry& a, const ImageEntry& b) { return a.id < b.id; });
}

void writeText(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    os << text;
    if (!os) throw IoError("write failed: " + path.string());
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

bool validId(const std::string& id) {
    if (id.empty() || id.size() > 128 || id[0] == '.') return false;
    return std::all_of(id.begin(), id.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
    });
}

} // namespace

json toJson(const DatasetManifest& m) {
    json images = json::array();
    for (const auto& e : m.images) {
        json j = {{"id", e.id},
                  {"status", toString(e.status)},
                  {"split", toString(e.split)},
                  {"manual_mask", e.manualMask},
                  {"error", e.error}};
        j["mm_per_px"] = e.mmPerPx ? json(*e.mmPerPx) : json(nullptr);
        j["classified_with"] = e.classifiedWith ? slicJson(*e.classifiedWith) : json(nullptr);
        images.push_back(j);
    }
    return {{"format", "lichenmeter-dataset"}, {"version", kManifestVersion}, {"seed", m.seed}, {"images", images}};
}

DatasetManifest createDataset(const fs::path& root, std::uint64_t seed) {
    if (fs::exists(root / "manifest.json")) throw Conflict("dataset already exists at " + root.string());
    for (const char* d : kDirs) fs::create_directories(root / d);
    DatasetManifest m;
    m.root = root;
    m.seed = seed;
    saveManifest(m);
    return m;
}

DatasetManifest loadManifest(const fs::path& root) {
    std::ifstream is(root / "manifest.json");
    if (!is) throw NotFound("no manifest.json under " + root.string());
    try {
        json j;
        is >> j;
        if (j.at("format") != "lichenmeter-dataset" || j.at("version") != kManifestVersion)
            throw IoError("unsupported manifest format");
        DatasetManifest m;
        m.root = root;
        m.seed = j.at("seed");
        for (const auto& e : j.at("images")) {
            ImageEntry ie;
            ie.id = e.at("id");
            ie.status = parseStage(e.at("status"));
            ie.split = parseSplit(e.at("split"));
            ie.manualMask = e.at("manual_mask");
            ie.error = e.at("error");
            if (!e.at("mm_per_px").is_null()) ie.mmPerPx = e.at("mm_per_px").get<double>();
            if (!e.at("classified_with").is_null()) ie.classifiedWith = slicFromJson(e.at("classified_with"));
            m.images.push_back(ie);
        }
        sortImages(m);
        return m;
    } catch (const json::exception& e) {
        throw IoError("manifest.json: " + std::string(e.what()));
    }
}

void saveManifest(const DatasetManifest& m) {
    const fs::path tmp = m.root / "manifest.json.tmp";
    writeText(tmp, toJson(m).dump(2) + "\n");
    fs::rename(tmp, m.root / "manifest.json");
}

void addRawImage(DatasetManifest& m, const std::string& id, const fs::path& source) {
    if (!validId(id)) throw InvalidArgument("invalid image id '" + id + "'");
    if (m.find(id)) throw Conflict("image '" + id + "' already in dataset");
    const Raster img = readImage(source);
    writePng(m.rawPath(id), img);
    ImageEntry e;
    e.id = id;
    m.images.push_back(e);
    sortImages(m);
}

// ---- Synthetic corpus ----------------------------------------------------------------

DatasetManifest synthesizeCorpus(const fs::path& root, const SynthOptions& opt) {
    if (opt.count < 1) throw InvalidArgument("synth: count must be >= 1");
    DatasetManifest m = createDataset(root, opt.seed);
    std::vector<std::uint64_t> seeds(opt.count);
    Rng rng(opt.seed);
    for (auto& s : seeds) s = rng.next();

    std::vector<ImageEntry> entries(opt.count);
    std::vector<std::string> errors(opt.count);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < opt.count; ++i) {
        try {
            char id[32];
            std::snprintf(id, sizeof id, "scene_%04d", i);
            synth::SceneSpec spec;
            if (opt.targets) {
                std::optional<synth::WarpParams> warp;
                if (opt.warp) warp = synth::randomWarp(seeds[i]);
                spec = synth::calibrationSpec(seeds[i], 4.0, warp);
            } else {
                spec = synth::presetSpec(opt.difficulty, seeds[i], opt.width, opt.height);
            }
            const synth::Scene scene = synth::generate(spec);
            ImageEntry& e = entries[i];
            e.id = id;
            writePng(m.rawPath(id), scene.image);
            writeMask(m.truthPath(id), scene.truth);
            writeText(m.metaPath(id), synth::metaJson(scene.meta) + "\n");
            if (!opt.targets) {
                writePng(m.rectifiedPath(id), scene.image);
                writeMask(m.manualMaskPath(id), scene.truth);
                e.status = Stage::Annotated;
                e.manualMask = true;
                e.mmPerPx = 1.0 / spec.pxPerMm;
            }
        } catch (const std::exception& ex) {
            errors[i] = ex.what();
        }
    }
    for (const auto& err : errors)
        if (!err.empty()) throw Error("synth: " + err);
    m.images = std::move(entries);
    sortImages(m);
    saveManifest(m);
    return m;
}

// ---- Stages ------------------------------------------------------------------------

int rectifyAll(DatasetManifest& m, const RectifyOptions& opt) {
    int done = 0;
    for (auto& e : m.images) {
        if (e.status != Stage::Raw) continue;
        try {
            const Raster raw = readImage(m.rawPath(e.id));
            const rectify::Rectified r = rectify::rectify(raw, opt.bounds, opt.layout);
            writePng(m.rectifiedPath(e.id), r.image);
            e.mmPerPx = r.image.scale();
            e.status = Stage::Rectified;
            e.error.clear();
            ++done;
        } catch (const Error& ex) {
            e.error = std::string("rectify: ") + ex.what();
        }
    }
    saveManifest(m);
    return done;
}

void splitDataset(DatasetManifest& m, int nTrain, int nTest, std::uint64_t seed) {
    const int n = static_cast<int>(m.images.size());
    if (nTrain < 0 || nTest < 0) throw InvalidArgument("split: counts must be non-negative");
    if (nTrain + nTest > n)
        throw InvalidArgument("split: " + std::to_string(nTrain + nTest) + " images requested, dataset has " +
                              std::to_string(n));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order.begin(), order.end());
    for (int k = 0; k < n; ++k)
        m.images[order[k]].split = k < nTrain ? Split::Train : k < nTrain + nTest ? Split::Test : Split::Unlabeled;
    m.seed = seed;
}

std::vector<modelselect::ImageSample> loadSamples(const DatasetManifest& m, Split s) {
    std::vector<modelselect::ImageSample> out;
    for (const auto& e : m.images) {
        if (e.split != s) continue;
        if (!e.manualMask) throw InvalidArgument("image '" + e.id + "' has no manual mask");
        modelselect::ImageSample smp;
        smp.id = e.id;
        smp.image = readImage(m.rectifiedPath(e.id));
        smp.truth = readMask(m.manualMaskPath(e.id));
        if (smp.truth.width() != smp.image.width() || smp.truth.height() != smp.image.height())
            throw InvalidArgument("image '" + e.id + "': mask and image sizes differ");
        out.push_back(std::move(smp));
    }
    return out;
}

namespace {

std::string modelFileName(std::size_t index, const modelselect::SweepEntry& e) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%02zu_%s_n%d_c%s_s%s.json", index, learners::toString(e.family).c_str(),
                  e.slic.nSegments, num(e.slic.compactness).c_str(), num(e.slic.sigma).c_str());
    return buf;
}

} // namespace

TrainResult train(DatasetManifest& m, const modelselect::SweepConfig& cfg) {
    const auto trainSet = loadSamples(m, Split::Train);
    const auto testSet = loadSamples(m, Split::Test);
    TrainResult r;
    r.report = modelselect::runSweep(trainSet, testSet, cfg);
    fs::create_directories(m.modelsDir());
    fs::create_directories(m.reportsDir());
    for (std::size_t i = 0; i < r.report.entries.size(); ++i) {
        const auto& e = r.report.entries[i];
        if (e.ok) learners::saveModel(m.modelsDir() / modelFileName(i, e), *e.model);
    }
    {
        std::ostringstream os;
        modelselect::writeReportCsv(os, r.report);
        writeText(m.reportsDir() / "sweep.csv", os.str());
        writeText(m.reportsDir() / "sweep.txt", modelselect::summary(r.report));
    }
    r.best = modelselect::selectBestIndex(r.report);
    const auto& best = r.report.entries[r.best];
    learners::saveModel(m.modelsDir() / "best.json", *best.model);

    // Training features of the chosen configuration, for inspection.
    const features::LabeledTable table =
        modelselect::buildTable(trainSet, best.slic, cfg.features, cfg.labelThreshold);
    fs::create_directories(m.featuresDir());
    std::ostringstream os;
    features::writeCsv(os, table);
    writeText(m.featuresDir() / "train.csv", os.str());
    saveManifest(m);
    return r;
}

int classifyAll(DatasetManifest& m, const learners::TrainedModel& model) {
    int done = 0;
    fs::create_directories(m.root / "masks" / "auto");
    for (auto& e : m.images) {
        if (e.split != Split::Unlabeled || e.status == Stage::Raw) continue;
        try {
            const BinaryMask mask = learners::classifyImage(model, readImage(m.rectifiedPath(e.id)));
            writeMask(m.autoMaskPath(e.id), mask);
            e.classifiedWith = model.slic;
            e.status = Stage::Classified;
            e.error.clear();
            ++done;
        } catch (const Error& ex) {
            e.error = std::string("classify: ") + ex.what();
        }
    }
    saveManifest(m);
    return done;
}

std::vector<ImageMeasurement> measureAll(DatasetManifest& m, regions::MinArea minArea) {
    std::vector<ImageMeasurement> out;
    fs::create_directories(m.reportsDir() / "thalli");
    for (auto& e : m.images) {
        const bool useAuto = e.classifiedWith.has_value() && fs::exists(m.autoMaskPath(e.id));
        if (!useAuto && !e.manualMask) continue;
        try {
            const BinaryMask mask = readMask(useAuto ? m.autoMaskPath(e.id) : m.manualMaskPath(e.id));
            ImageMeasurement im;
            im.id = e.id;
            im.source = useAuto ? "auto" : "manual";
            im.report = regions::filterSmall(regions::measure(mask, e.mmPerPx), minArea);
            std::ostringstream os;
            regions::writeCsv(os, im.report);
            writeText(m.reportsDir() / "thalli" / (e.id + ".csv"), os.str());
            e.status = Stage::Measured;
            e.error.clear();
            out.push_back(std::move(im));
        } catch (const Error& ex) {
            e.error = std::string("measure: ") + ex.what();
        }
    }
    saveManifest(m);
    return out;
}

namespace {

double areaOf(const regions::ThallusRecord& t, bool mm) { return mm ? *t.areaMm2 : static_cast<double>(t.areaPx); }

std::vector<regions::ThallusRecord> largest(const regions::RegionReport& r, std::size_t k) {
    std::vector<regions::ThallusRecord> v = r.thalli;
    std::stable_sort(v.begin(), v.end(),
                     [](const regions::ThallusRecord& a, const regions::ThallusRecord& b) { return a.areaPx > b.areaPx; });
    if (v.size() > k) v.resize(k);
    return v;
}

} // namespace

CorpusReport aggregate(std::vector<ImageMeasurement> images) {
    CorpusReport r;
    r.images = std::move(images);
    r.areaInMm2 = !r.images.empty();
    for (const auto& im : r.images) r.areaInMm2 = r.areaInMm2 && im.report.mmPerPx.has_value();
    double mm2 = 0;
    std::vector<double> areas;
    for (const auto& im : r.images) {
        r.thallusCount += im.report.stats.thallusCount;
        r.lichenAreaPx += im.report.stats.totalLichenAreaPx;
        r.totalPixels += im.report.totalPixels;
        if (r.areaInMm2) mm2 += *im.report.stats.totalLichenAreaMm2;
        for (const auto& t : im.report.thalli) areas.push_back(areaOf(t, r.areaInMm2));
    }
    if (r.areaInMm2) r.lichenAreaMm2 = mm2;

    // Four bins per decade, spanning the observed areas.
    if (!areas.empty()) {
        const auto [lo, hi] = std::minmax_element(areas.begin(), areas.end());
        const int d0 = static_cast<int>(std::floor(std::log10(*lo) * 4)), d1 = static_cast<int>(std::floor(std::log10(*hi) * 4)) + 1;
        for (int d = d0; d <= d1; ++d) r.histogramEdgesMm2.push_back(std::pow(10.0, d / 4.0));
        r.histogramCounts.assign(r.histogramEdgesMm2.size() - 1, 0);
        for (double a : areas) {
            const auto it = std::upper_bound(r.histogramEdgesMm2.begin(), r.histogramEdgesMm2.end(), a);
            const int bin = std::clamp(static_cast<int>(it - r.histogramEdgesMm2.begin()) - 1, 0,
                                       static_cast<int>(r.histogramCounts.size()) - 1);
            ++r.histogramCounts[bin];
        }
    }
    return r;
}

void writeReport(std::ostream& csv, std::ostream& js, const CorpusReport& r) {
    csv << "image,source,thallus_count,cover_fraction,lichen_area_px,lichen_area_mm2,largest_areas\n";
    for (const auto& im : r.images) {
        const auto& s = im.report.stats;
        csv << im.id << ',' << im.source << ',' << s.thallusCount << ',' << num(s.coverFraction) << ','
            << s.totalLichenAreaPx << ',' << (s.totalLichenAreaMm2 ? num(*s.totalLichenAreaMm2) : "") << ',';
        const auto top = largest(im.report, 5);
        for (std::size_t k = 0; k < top.size(); ++k) csv << (k ? ";" : "") << num(areaOf(top[k], r.areaInMm2));
        csv << '\n';
    }
    csv << "total,," << r.thallusCount << ','
        << num(r.totalPixels ? static_cast<double>(r.lichenAreaPx) / r.totalPixels : 0.0) << ',' << r.lichenAreaPx
        << ',' << (r.lichenAreaMm2 ? num(*r.lichenAreaMm2) : "") << ",\n";

    json images = json::array();
    for (const auto& im : r.images) {
        const auto& s = im.report.stats;
        json top = json::array();
        for (const auto& t : largest(im.report, 5)) {
            json tj = {{"index", t.index}, {"area_px", t.areaPx}, {"perimeter_px", t.perimeterPx}};
            if (t.areaMm2) tj["area_mm2"] = *t.areaMm2;
            if (t.perimeterMm) tj["perimeter_mm"] = *t.perimeterMm;
            top.push_back(tj);
        }
        json ij = {{"id", im.id},
                   {"source", im.source},
                   {"thallus_count", s.thallusCount},
                   {"cover_fraction", s.coverFraction},
                   {"lichen_area_px", s.totalLichenAreaPx},
                   {"largest", top}};
        if (s.totalLichenAreaMm2) ij["lichen_area_mm2"] = *s.totalLichenAreaMm2;
        images.push_back(ij);
    }
    json out = {{"images", images},
                {"thallus_count", r.thallusCount},
                {"lichen_area_px", r.lichenAreaPx},
                {"total_pixels", r.totalPixels},
                {"area_unit", r.areaInMm2 ? "mm2" : "px"},
                {"histogram", {{"edges", r.histogramEdgesMm2}, {"counts", r.histogramCounts}}}};
    if (r.lichenAreaMm2) out["lichen_area_mm2"] = *r.lichenAreaMm2;
    js << out.dump(2) << '\n';
}

CorpusReport report(DatasetManifest& m, regions::MinArea minArea) {
    CorpusReport r = aggregate(measureAll(m, minArea));
    std::ostringstream csv, js;
    writeReport(csv, js, r);
    writeText(m.reportsDir() / "summary.csv", csv.str());
    writeText(m.reportsDir() / "report.json", js.str());
    return r;
}

std::vector<modelselect::ImageScore> evaluateTestSet(const DatasetManifest& m, const learners::TrainedModel& model) {
    const auto test = loadSamples(m, Split::Test);
    if (test.empty()) throw InvalidArgument("evaluate: the dataset has no test images");
    return modelselect::evaluate(model, test);
}

// ---- Annotation ---------------------------------------------------------------

AnnotationSession::AnnotationSession(std::string imageId, Raster image, grabcut::Params params)
    : id_(std::move(imageId)), image_(std::move(image)), params_(params) {}

void AnnotationSession::recompute() {
    std::vector<grabcut::Stroke> all;
    for (const auto& b : history_) all.insert(all.end(), b.begin(), b.end());
    const grabcut::Trimap base = grabcut::initTrimap(image_, *rect_);
    const grabcut::Segmentation seg = grabcut::segment(image_, grabcut::applyStrokes(base, all), params_);
    mask_ = seg.mask;
    iterations_ = seg.iterations;
    ++version_;
}

const BinaryMask& AnnotationSession::init(const grabcut::Rect& rect) {
    const auto oldRect = rect_;
    auto oldHistory = std::move(history_);
    rect_ = rect;
    history_.clear();
    try {
        recompute();
    } catch (...) {
        rect_ = oldRect;
        history_ = std::move(oldHistory);
        throw;
    }
    return mask_;
}

const BinaryMask& AnnotationSession::addStrokes(const std::vector<grabcut::Stroke>& batch) {
    if (!initialized()) throw Conflict("session has no initial rectangle");
    if (batch.empty()) throw InvalidArgument("no strokes in request");
    history_.push_back(batch);
    try {
        recompute();
    } catch (...) {
        history_.pop_back();
        throw;
    }
    return mask_;
}

const BinaryMask& AnnotationSession::undo() {
    if (!initialized()) throw Conflict("session has no initial rectangle");
    if (history_.empty()) throw Conflict("nothing to undo");
    auto last = std::move(history_.back());
    history_.pop_back();
    try {
        recompute();
    } catch (...) {
        history_.push_back(std::move(last));
        throw;
    }
    return mask_;
}

const BinaryMask& AnnotationSession::mask() const {
    if (!initialized()) throw Conflict("session has no initial rectangle");
    return mask_;
}

json strokeToJson(const grabcut::Stroke& s) {
    json pts = json::array();
    for (const auto& p : s.points) pts.push_back({p.x, p.y});
    return {{"points", pts}, {"label", s.foreground ? "fg" : "bg"}, {"brushRadius", s.brushRadius}};
}

grabcut::Stroke strokeFromJson(const json& j) {
    try {
        grabcut::Stroke s;
        for (const auto& p : j.at("points")) {
            if (!p.is_array() || p.size() != 2) throw InvalidArgument("stroke point must be [x, y]");
            s.points.push_back({p[0].get<double>(), p[1].get<double>()});
        }
        const std::string label = j.at("label");
        if (label != "fg" && label != "bg") throw InvalidArgument("stroke label must be 'fg' or 'bg'");
        s.foreground = label == "fg";
        if (j.contains("brushRadius")) s.brushRadius = j.at("brushRadius").get<double>();
        return s;
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("malformed stroke: ") + e.what());
    }
}

json AnnotationSession::historyJson() const {
    json batches = json::array();
    for (const auto& b : history_) {
        json jb = json::array();
        for (const auto& s : b) jb.push_back(strokeToJson(s));
        batches.push_back(jb);
    }
    json j = {{"image", id_},
              {"params",
               {{"iterations", params_.iterations},
                {"lambda", params_.lambda},
                {"min_change_fraction", params_.minChangeFraction},
                {"seed", params_.seed}}},
              {"batches", batches}};
    if (rect_) j["rect"] = {{"x", rect_->x}, {"y", rect_->y}, {"width", rect_->width}, {"height", rect_->height}};
    return j;
}

BinaryMask replayHistory(const Raster& image, const json& history) {
    try {
        grabcut::Params p;
        const json& jp = history.at("params");
        p.iterations = jp.at("iterations");
        p.lambda = jp.at("lambda");
        p.minChangeFraction = jp.at("min_change_fraction");
        p.seed = jp.at("seed");
        const json& r = history.at("rect");
        AnnotationSession s(history.value("image", ""), image, p);
        s.init({r.at("x"), r.at("y"), r.at("width"), r.at("height")});
        for (const auto& b : history.at("batches")) {
            std::vector<grabcut::Stroke> batch;
            for (const auto& st : b) batch.push_back(strokeFromJson(st));
            s.addStrokes(batch);
        }
        return s.mask();
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("malformed session history: ") + e.what());
    }
}

} // namespace lichen::pipeline
