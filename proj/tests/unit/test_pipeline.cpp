#include <doctest.h>

#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "helpers.hpp"
#include "lichen/error.hpp"
#include "lichen/pipeline.hpp"
#include "lichen/service.hpp"

using namespace lichen;
using namespace lichen::pipeline;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// Every regular file under `root`, keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
    return out;
}

SynthOptions smallCorpus(int count, std::uint64_t seed) {
    SynthOptions o;
    o.count = count;
    o.seed = seed;
    o.width = 200;
    o.height = 150;
    return o;
}

modelselect::SweepConfig quickSweep() {
    modelselect::SweepConfig cfg;
    cfg.slicGrid = {slic::SlicParams{500, 20, 1}, slic::SlicParams{200, 10, 1}};
    cfg.seed = 5;
    return cfg;
}

} // namespace

TEST_CASE("manifest round trip and layout") {
    const auto dir = testutil::scratchDir("manifest");
    DatasetManifest m = createDataset(dir / "ds", 7);
    for (const char* d : {"raw", "rectified", "masks/manual", "masks/auto", "features", "models", "reports"})
        CHECK(fs::is_directory(dir / "ds" / d));
    CHECK_THROWS_AS(createDataset(dir / "ds"), Conflict);

    Rng rng(1);
    writePng(dir / "photo.png", testutil::randomRaster(rng, 20, 10, 3));
    addRawImage(m, "b_img", dir / "photo.png");
    addRawImage(m, "a_img", dir / "photo.png");
    CHECK_THROWS_AS(addRawImage(m, "a_img", dir / "photo.png"), Conflict);
    CHECK_THROWS_AS(addRawImage(m, "../evil", dir / "photo.png"), InvalidArgument);
    m.images[1].mmPerPx = 0.1;
    m.images[1].classifiedWith = slic::SlicParams{1000, 10, 3};
    m.images[1].split = Split::Test;
    saveManifest(m);
    const DatasetManifest back = loadManifest(dir / "ds");
    CHECK(back.images == m.images);
    CHECK(back.seed == 7u);
    CHECK(back.images.front().id == "a_img");
    CHECK_THROWS_AS(back.at("nope"), NotFound);
    CHECK_THROWS_AS(loadManifest(dir / "missing"), NotFound);
}

TEST_CASE("synthetic corpus is written completely and reproducibly") {
    const auto dir = testutil::scratchDir("synth_corpus");
    const DatasetManifest m = synthesizeCorpus(dir / "a", smallCorpus(4, 9));
    synthesizeCorpus(dir / "b", smallCorpus(4, 9));
    REQUIRE(m.images.size() == 4);
    for (const auto& e : m.images) {
        CHECK(fs::exists(m.rawPath(e.id)));
        CHECK(fs::exists(m.truthPath(e.id)));
        CHECK(fs::exists(m.metaPath(e.id)));
        CHECK(e.manualMask);
        CHECK((e.status == Stage::Annotated));
        CHECK(readMask(m.manualMaskPath(e.id)) == readMask(m.truthPath(e.id)));
    }
    CHECK(snapshot(dir / "a") == snapshot(dir / "b"));
    synthesizeCorpus(dir / "c", smallCorpus(4, 10));
    CHECK(slurp(dir / "a" / "raw" / "scene_0000.png") != slurp(dir / "c" / "raw" / "scene_0000.png"));
}

TEST_CASE("splitDataset") {
    DatasetManifest m;
    for (int i = 0; i < 12; ++i) m.images.push_back(ImageEntry{"img" + std::to_string(100 + i)});
    splitDataset(m, 12, 0, 3);
    CHECK(m.ids(Split::Train).size() == 12);

    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        splitDataset(m, 5, 4, seed);
        const auto tr = m.ids(Split::Train), te = m.ids(Split::Test), un = m.ids(Split::Unlabeled);
        REQUIRE(tr.size() == 5);
        REQUIRE(te.size() == 4);
        REQUIRE(un.size() == 3);
        std::set<std::string> all(tr.begin(), tr.end());
        all.insert(te.begin(), te.end());
        all.insert(un.begin(), un.end());
        REQUIRE(all.size() == 12);
    }
    splitDataset(m, 5, 4, 77);
    const auto first = m.ids(Split::Train);
    splitDataset(m, 2, 2, 1);
    splitDataset(m, 5, 4, 77);
    CHECK(m.ids(Split::Train) == first);
    CHECK_THROWS_AS(splitDataset(m, 10, 3, 0), InvalidArgument);
    CHECK_THROWS_AS(splitDataset(m, -1, 3, 0), InvalidArgument);
}

TEST_CASE("rectifyAll rectifies calibration scenes and records failures") {
    const auto dir = testutil::scratchDir("rectify_all");
    SynthOptions o;
    o.count = 2;
    o.seed = 4;
    o.targets = true;
    DatasetManifest m = synthesizeCorpus(dir / "ds", o);
    for (const auto& e : m.images) CHECK((e.status == Stage::Raw));
    // Blank out the second photograph: no targets to find.
    const Raster blank(300, 200, 3);
    writePng(m.rawPath(m.images[1].id), blank);
    const std::string rawBefore = slurp(m.rawPath(m.images[0].id));

    CHECK(rectifyAll(m, {}) == 1);
    CHECK((m.images[0].status == Stage::Rectified));
    CHECK(*m.images[0].mmPerPx == doctest::Approx(0.1));
    const Raster r = readImage(m.rectifiedPath(m.images[0].id));
    CHECK(r.width() == 2720);
    CHECK(r.height() == 1850);
    CHECK((m.images[1].status == Stage::Raw));
    CHECK(m.images[1].error.find("0 of 4") != std::string::npos);
    CHECK(slurp(m.rawPath(m.images[0].id)) == rawBefore);
    CHECK(loadManifest(dir / "ds").images == m.images);
}

TEST_CASE("train, classify and report on a small corpus") {
    const auto dir = testutil::scratchDir("train_classify");
    DatasetManifest m = synthesizeCorpus(dir / "ds", smallCorpus(6, 21));
    splitDataset(m, 2, 2, 8);
    const TrainResult tr = train(m, quickSweep());
    REQUIRE(tr.report.entries.size() == 4);
    CHECK(fs::exists(m.modelsDir() / "best.json"));
    CHECK(fs::exists(m.reportsDir() / "sweep.csv"));
    CHECK(fs::exists(m.featuresDir() / "train.csv"));
    const auto& bestEntry = tr.report.entries[tr.best];
    CHECK(bestEntry.meanMcc > 0.8);

    const learners::TrainedModel model = learners::loadModel(m.modelsDir() / "best.json");
    CHECK(model.slic == bestEntry.slic);

    // Applying the stored model to the test images reproduces the sweep's scores.
    const auto scores = evaluateTestSet(m, model);
    REQUIRE(scores.size() == bestEntry.images.size());
    for (std::size_t i = 0; i < scores.size(); ++i) CHECK(scores[i].counts == bestEntry.images[i].counts);

    CHECK(classifyAll(m, model) == 2);
    for (const auto& e : m.images) {
        if (e.split != Split::Unlabeled) {
            CHECK_FALSE(fs::exists(m.autoMaskPath(e.id)));
            continue;
        }
        CHECK((e.status == Stage::Classified));
        REQUIRE(e.classifiedWith.has_value());
        CHECK(*e.classifiedWith == model.slic);
        CHECK(readMask(m.autoMaskPath(e.id)) == learners::classifyImage(model, readImage(m.rectifiedPath(e.id))));
    }

    const CorpusReport r = report(m);
    CHECK(r.images.size() == 6);
    int count = 0;
    std::int64_t area = 0;
    double mm2 = 0;
    for (const auto& im : r.images) {
        count += im.report.stats.thallusCount;
        area += im.report.stats.totalLichenAreaPx;
        mm2 += *im.report.stats.totalLichenAreaMm2;
        CHECK(im.source == (m.at(im.id).split == Split::Unlabeled ? "auto" : "manual"));
        CHECK(fs::exists(m.reportsDir() / "thalli" / (im.id + ".csv")));
    }
    CHECK(r.thallusCount == count);
    CHECK(r.lichenAreaPx == area);
    CHECK(*r.lichenAreaMm2 == doctest::Approx(mm2));
    int binned = 0;
    for (int c : r.histogramCounts) binned += c;
    CHECK(binned == count);
    CHECK(fs::exists(m.reportsDir() / "summary.csv"));
    CHECK(fs::exists(m.reportsDir() / "report.json"));
    for (const auto& e : loadManifest(dir / "ds").images) CHECK((e.status == Stage::Measured));
}

TEST_CASE("classifyAll with no unlabeled images is a no-op") {
    const auto dir = testutil::scratchDir("classify_noop");
    DatasetManifest m = synthesizeCorpus(dir / "ds", smallCorpus(2, 3));
    splitDataset(m, 1, 1, 0);
    learners::TrainedModel model;
    CHECK(classifyAll(m, model) == 0);
}

TEST_CASE("report on hand-made masks") {
    regions::RegionReport square;
    {
        BinaryMask mask(20, 20);
        for (int y = 5; y < 15; ++y)
            for (int x = 5; x < 15; ++x) mask.at(x, y) = 1;
        square = regions::measure(mask, 1.0);
    }
    const CorpusReport one = aggregate({ImageMeasurement{"sq", "manual", square}});
    CHECK(one.thallusCount == 1);
    CHECK(*one.lichenAreaMm2 == doctest::Approx(100.0));
    CHECK(one.images[0].report.stats.coverFraction == doctest::Approx(0.25));

    const CorpusReport empty = aggregate({ImageMeasurement{"e", "manual", regions::measure(BinaryMask(8, 8), 1.0)}});
    CHECK(empty.thallusCount == 0);
    CHECK(empty.lichenAreaPx == 0);
    CHECK(empty.histogramCounts.empty());
    std::ostringstream csv, js;
    writeReport(csv, js, empty);
    CHECK(csv.str().find("total,,0,0,0,0,") != std::string::npos);
    CHECK(json::parse(js.str())["thallus_count"] == 0);
}

TEST_CASE("full pipeline runs are byte-identical") {
    const auto dir = testutil::scratchDir("determinism");
    for (const char* name : {"a", "b"}) {
        DatasetManifest m = synthesizeCorpus(dir / name, smallCorpus(5, 44));
        splitDataset(m, 2, 2, 12);
        train(m, quickSweep());
        classifyAll(m, learners::loadModel(m.modelsDir() / "best.json"));
        report(m);
    }
    const auto a = snapshot(dir / "a"), b = snapshot(dir / "b");
    CHECK(a.size() > 30);
    CHECK(a == b);
}

TEST_CASE("annotation session history contract") {
    const synth::Scene scene = synth::generate(synth::presetSpec(synth::Difficulty::Medium, 11, 200, 150));
    const grabcut::Rect rect{2, 2, 196, 146};
    AnnotationSession s("scene", scene.image);
    CHECK_THROWS_AS(s.mask(), Conflict);
    CHECK_THROWS_AS(s.addStrokes({grabcut::Stroke{{{5, 5}}, false, 3}}), Conflict);

    s.init(rect);
    CHECK(s.mask() == grabcut::segment(scene.image, grabcut::initTrimap(scene.image, rect)).mask);
    CHECK_THROWS_AS(s.undo(), Conflict);

    std::vector<BinaryMask> masks{s.mask()};
    for (int k = 0; k < 12 && testutil::mcc(s.mask(), scene.truth) < 0.95; ++k) {
        const auto st = testutil::oracleStroke(s.mask(), scene.truth);
        if (!st) break;
        s.addStrokes({*st});
        masks.push_back(s.mask());
    }
    CHECK(testutil::mcc(s.mask(), scene.truth) >= 0.9);
    CHECK(replayHistory(scene.image, s.historyJson()) == s.mask());
    const int depth = s.historyDepth();
    REQUIRE(depth >= 1);
    s.undo();
    CHECK(s.historyDepth() == depth - 1);
    CHECK(s.mask() == masks[depth - 1]);

    CHECK_THROWS_AS(s.addStrokes({}), InvalidArgument);
    CHECK_THROWS_AS(s.addStrokes({grabcut::Stroke{{{500, 5}}, true, 3}}), InvalidArgument);
    CHECK(s.historyDepth() == depth - 1);
}

TEST_CASE("annotation HTTP API") {
    const auto dir = testutil::scratchDir("service");
    DatasetManifest m = synthesizeCorpus(dir / "ds", smallCorpus(3, 17));
    const std::string id = m.images[0].id, other = m.images[1].id;
    const auto rawBefore = snapshot(dir / "ds" / "raw");
    AnnotationService svc(m);
    const int port = svc.start();
    httplib::Client cli("127.0.0.1", port);

    auto res = cli.Get("/api/images");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(json::parse(res->body).size() == 3);

    res = cli.Get("/api/images/" + id);
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->get_header_value("Content-Type") == "image/png");
    CHECK(res->body == slurp(m.rectifiedPath(id)));

    CHECK(cli.Get("/api/images/nope")->status == 404);
    CHECK(cli.Post("/api/sessions/nope/init", R"({"rect":{"x":1,"y":1,"width":5,"height":5}})", "application/json")
              ->status == 404);
    CHECK(cli.Post("/api/sessions/" + id + "/strokes", R"({"strokes":[]})", "application/json")->status == 404);
    CHECK(cli.Post("/api/sessions/" + id + "/init", "{oops", "application/json")->status == 400);
    CHECK(cli.Post("/api/sessions/" + id + "/init", R"({"x":1})", "application/json")->status == 400);

    const std::string rect = R"({"rect":{"x":2,"y":2,"width":196,"height":146}})";
    res = cli.Post("/api/sessions/" + id + "/init", rect, "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    json state = json::parse(res->body);
    CHECK(state["depth"] == 0);
    CHECK(state["mask"].get<std::string>().rfind("/api/sessions/" + id + "/mask", 0) == 0);

    // Local mirror of the session for comparison.
    const Raster image = readImage(m.rectifiedPath(id));
    const BinaryMask truth = readMask(m.manualMaskPath(id));
    AnnotationSession mirror(id, image);
    mirror.init({2, 2, 196, 146});
    res = cli.Get("/api/sessions/" + id + "/mask");
    REQUIRE(res);
    const auto initPng = encodeMaskPng(mirror.mask());
    CHECK(res->body == std::string(initPng.begin(), initPng.end()));

    for (int k = 0; k < 3; ++k) {
        auto st = testutil::oracleStroke(mirror.mask(), truth);
        if (!st) st = grabcut::Stroke{{{10.0 + 20 * k, 140}}, truth.at(10 + 20 * k, 140) != 0, 2};
        json body = {{"strokes", json::array({strokeToJson(*st)})}};
        res = cli.Post("/api/sessions/" + id + "/strokes", body.dump(), "application/json");
        REQUIRE(res);
        REQUIRE(res->status == 200);
        mirror.addStrokes({*st});
        CHECK(json::parse(res->body)["depth"] == mirror.historyDepth());
    }
    CHECK(cli.Post("/api/sessions/" + id + "/strokes",
                   R"({"strokes":[{"points":[[1,1]],"label":"purple","brushRadius":2}]})", "application/json")
              ->status == 400);

    res = cli.Post("/api/sessions/" + id + "/undo", "", "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    mirror.undo();
    const auto maskPng = encodeMaskPng(mirror.mask());
    CHECK(cli.Get("/api/sessions/" + id + "/mask")->body == std::string(maskPng.begin(), maskPng.end()));

    res = cli.Post("/api/sessions/" + id + "/finalize", "", "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(readMask(m.manualMaskPath(id)) == mirror.mask());
    const json history = json::parse(slurp(m.sessionPath(id)));
    CHECK(replayHistory(image, history) == readMask(m.manualMaskPath(id)));
    CHECK(loadManifest(dir / "ds").at(id).manualMask);

    CHECK(cli.Post("/api/sessions/" + id + "/finalize", "", "application/json")->status == 409);
    CHECK(cli.Post("/api/sessions/" + id + "/undo", "", "application/json")->status == 409);
    CHECK(cli.Get("/api/sessions/" + id + "/mask")->status == 200);

    // Two finalize calls racing on one session: exactly one wins.
    REQUIRE(cli.Post("/api/sessions/" + other + "/init", rect, "application/json")->status == 200);
    int codes[2] = {0, 0};
    std::thread t1([&] { codes[0] = httplib::Client("127.0.0.1", port).Post("/api/sessions/" + other + "/finalize")->status; });
    std::thread t2([&] { codes[1] = httplib::Client("127.0.0.1", port).Post("/api/sessions/" + other + "/finalize")->status; });
    t1.join();
    t2.join();
    CHECK(std::min(codes[0], codes[1]) == 200);
    CHECK(std::max(codes[0], codes[1]) == 409);

    svc.stop();
    CHECK(snapshot(dir / "ds" / "raw") == rawBefore);
}
