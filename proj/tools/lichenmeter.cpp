// lichenmeter: command-line front end for the dataset pipeline.

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "lichen/error.hpp"
#include "lichen/pipeline.hpp"
#include "lichen/service.hpp"

using namespace lichen;
using namespace lichen::pipeline;

namespace {

int exitCode(const std::exception& e) {
    if (dynamic_cast<const InvalidArgument*>(&e)) return 3;
    if (dynamic_cast<const DetectionFailure*>(&e)) return 4;
    if (dynamic_cast<const NotFound*>(&e)) return 5;
    if (dynamic_cast<const Conflict*>(&e)) return 6;
    if (dynamic_cast<const IoError*>(&e)) return 7;
    return 1;
}

void printScores(const std::vector<modelselect::ImageScore>& scores) {
    double m = 0, p = 0;
    for (const auto& s : scores) {
        std::printf("%-24s mcc=%.4f precision=%.4f%s\n", s.id.c_str(), s.mcc, s.precision.value,
                    s.precision.defined ? "" : " (no positives predicted)");
        m += s.mcc;
        p += s.precision.value;
    }
    if (!scores.empty())
        std::printf("mean                     mcc=%.4f precision=%.4f\n", m / scores.size(), p / scores.size());
}

AnnotationService* gService = nullptr;

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lichen measurement toolkit: rectify, annotate, train, classify and measure."};
    app.require_subcommand(1);
    std::string data;
    int threads = 0;
    app.add_option("--threads", threads, "OpenMP threads (0 = default)");

    // synth
    auto* synthCmd = app.add_subcommand("synth", "Generate a synthetic corpus with ground truth");
    SynthOptions so;
    std::string out, difficulty = "medium";
    synthCmd->add_option("--out", out, "Dataset directory to create")->required();
    synthCmd->add_option("--count", so.count, "Number of scenes")->capture_default_str();
    synthCmd->add_option("--seed", so.seed, "Corpus seed")->capture_default_str();
    synthCmd->add_option("--difficulty", difficulty, "easy|medium|hard")->capture_default_str();
    synthCmd->add_flag("--targets", so.targets, "Calibration scenes with targets and the 60 mm mark");
    synthCmd->add_flag("--warp", so.warp, "Photograph calibration scenes under a random tilt");
    synthCmd->add_option("--width", so.width, "Scene width in pixels")->capture_default_str();
    synthCmd->add_option("--height", so.height, "Scene height in pixels")->capture_default_str();

    // rectify
    auto* rectCmd = app.add_subcommand("rectify", "Detect targets and rectify raw photographs");
    RectifyOptions ro;
    std::vector<std::string> addFiles;
    std::vector<int> hsv;
    rectCmd->add_option("--data", data, "Dataset directory")->required();
    rectCmd->add_option("--add", addFiles, "Photographs to import into raw/ first (id = file stem)");
    rectCmd->add_option("--hsv", hsv, "Target HSV bounds: hLo hHi sLo sHi vLo vHi (8-bit, H in [0,180))")
        ->expected(6);
    rectCmd->add_option("--board-width-mm", ro.layout.widthMm)->capture_default_str();
    rectCmd->add_option("--board-height-mm", ro.layout.heightMm)->capture_default_str();
    rectCmd->add_option("--px-per-mm", ro.layout.outputPxPerMm)->capture_default_str();

    // split
    auto* splitCmd = app.add_subcommand("split", "Assign train/test/unlabeled images");
    int nTrain = -1, nTest = -1;
    std::uint64_t seed = 0;
    splitCmd->add_option("--data", data, "Dataset directory")->required();
    splitCmd->add_option("--train", nTrain)->required();
    splitCmd->add_option("--test", nTest)->required();
    splitCmd->add_option("--seed", seed)->capture_default_str();

    // annotate
    auto* annCmd = app.add_subcommand("annotate", "Serve the annotation API");
    ServiceOptions svcOpt;
    std::string uiDir;
    annCmd->add_option("--data", data, "Dataset directory")->required();
    annCmd->add_option("--host", svcOpt.host)->capture_default_str();
    annCmd->add_option("--port", svcOpt.port, "0 picks a free port")->capture_default_str();
    annCmd->add_option("--ui", uiDir, "Static UI bundle to serve at /");

    // train
    auto* trainCmd = app.add_subcommand("train", "Run the 24-model sweep and pick the best model");
    bool cv = false, single = false;
    int workers = 0;
    trainCmd->add_option("--data", data, "Dataset directory")->required();
    trainCmd->add_option("--train", nTrain, "Re-split with this many training images");
    trainCmd->add_option("--test", nTest, "Re-split with this many test images");
    trainCmd->add_flag("--cv", cv, "5-fold cross-validated hyperparameter search");
    trainCmd->add_option("--seed", seed)->capture_default_str();
    trainCmd->add_option("--workers", workers, "Concurrent sweep entries (0 = all threads)");
    trainCmd->add_flag("--single", single, "Only SLIC 500/20/1 instead of the 12-configuration grid");

    // classify / eval
    std::string modelPath;
    auto* classifyCmd = app.add_subcommand("classify", "Segment the unlabeled images with a trained model");
    classifyCmd->add_option("--data", data, "Dataset directory")->required();
    classifyCmd->add_option("--model", modelPath, "Model JSON (default models/best.json)");
    auto* evalCmd = app.add_subcommand("eval", "Score a model on the test split");
    evalCmd->add_option("--data", data, "Dataset directory")->required();
    evalCmd->add_option("--model", modelPath, "Model JSON (default models/best.json)");

    // measure / report
    regions::MinArea minArea;
    auto* measureCmd = app.add_subcommand("measure", "Per-thallus measurements of every mask");
    auto* reportCmd = app.add_subcommand("report", "Measure and aggregate into corpus reports");
    for (auto* c : {measureCmd, reportCmd}) {
        c->add_option("--data", data, "Dataset directory")->required();
        c->add_option("--min-area", minArea.value, "Drop thalli smaller than this")->capture_default_str();
        c->add_flag("--mm2", minArea.inMm2, "Interpret --min-area in mm^2");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 2;
    }
    setThreads(threads);

    try {
        if (synthCmd->parsed()) {
            so.difficulty = synth::parseDifficulty(difficulty);
            const DatasetManifest m = synthesizeCorpus(out, so);
            std::printf("wrote %zu scenes to %s\n", m.images.size(), out.c_str());
        } else if (rectCmd->parsed()) {
            DatasetManifest m = loadManifest(data);
            for (const auto& f : addFiles) addRawImage(m, std::filesystem::path(f).stem().string(), f);
            if (!hsv.empty()) ro.bounds = {hsv[0], hsv[1], hsv[2], hsv[3], hsv[4], hsv[5]};
            const int n = rectifyAll(m, ro);
            std::printf("rectified %d image(s)\n", n);
            for (const auto& e : m.images)
                if (!e.error.empty()) std::fprintf(stderr, "%s: %s\n", e.id.c_str(), e.error.c_str());
        } else if (splitCmd->parsed()) {
            DatasetManifest m = loadManifest(data);
            splitDataset(m, nTrain, nTest, seed);
            saveManifest(m);
            std::printf("train=%zu test=%zu unlabeled=%zu\n", m.ids(Split::Train).size(), m.ids(Split::Test).size(),
                        m.ids(Split::Unlabeled).size());
        } else if (annCmd->parsed()) {
            svcOpt.uiDir = uiDir;
            AnnotationService svc(loadManifest(data), svcOpt);
            gService = &svc;
            const int port = svc.start();
            std::signal(SIGINT, [](int) {
                if (gService) gService->stop();
            });
            std::printf("annotation service on http://%s:%d/\n", svcOpt.host.c_str(), port);
            std::fflush(stdout);
            svc.wait();
            gService = nullptr;
        } else if (trainCmd->parsed()) {
            DatasetManifest m = loadManifest(data);
            if (nTrain >= 0 || nTest >= 0) {
                if (nTrain < 0 || nTest < 0) throw InvalidArgument("--train and --test go together");
                splitDataset(m, nTrain, nTest, seed);
            }
            modelselect::SweepConfig cfg;
            cfg.crossValidate = cv;
            cfg.seed = seed;
            cfg.workers = workers;
            if (single) cfg.slicGrid = {slic::SlicParams{}};
            const TrainResult r = train(m, cfg);
            std::fputs(modelselect::summary(r.report).c_str(), stdout);
        } else if (classifyCmd->parsed() || evalCmd->parsed()) {
            DatasetManifest m = loadManifest(data);
            const auto model = learners::loadModel(modelPath.empty() ? m.modelsDir() / "best.json" : std::filesystem::path(modelPath));
            if (classifyCmd->parsed()) {
                std::printf("classified %d image(s)\n", classifyAll(m, model));
                for (const auto& e : m.images)
                    if (!e.error.empty()) std::fprintf(stderr, "%s: %s\n", e.id.c_str(), e.error.c_str());
            } else {
                const auto scores = evaluateTestSet(m, model);
                printScores(scores);
                std::ofstream os(m.reportsDir() / "eval.csv");
                os << "image,mcc,precision,precision_defined,tp,fp,tn,fn\n";
                for (const auto& s : scores)
                    os << s.id << ',' << s.mcc << ',' << s.precision.value << ',' << s.precision.defined << ','
                       << s.counts.tp << ',' << s.counts.fp << ',' << s.counts.tn << ',' << s.counts.fn << '\n';
            }
        } else if (measureCmd->parsed()) {
            DatasetManifest m = loadManifest(data);
            for (const auto& im : measureAll(m, minArea))
                std::printf("%-24s %-6s thalli=%d cover=%.4f\n", im.id.c_str(), im.source.c_str(),
                            im.report.stats.thallusCount, im.report.stats.coverFraction);
        } else if (reportCmd->parsed()) {
            DatasetManifest m = loadManifest(data);
            const CorpusReport r = report(m, minArea);
            std::printf("%zu image(s), %d thalli, cover %.4f; see %s\n", r.images.size(), r.thallusCount,
                        r.totalPixels ? double(r.lichenAreaPx) / r.totalPixels : 0.0,
                        (m.reportsDir() / "summary.csv").c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exitCode(e);
    }
    return 0;
}
