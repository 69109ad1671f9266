#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "lichen/grabcut.hpp"
#include "lichen/pipeline.hpp"

namespace lichen::pipeline {

struct ServiceOptions {
    std::string host = "127.0.0.1";
    int port = 0; // 0 picks a free port
    std::filesystem::path uiDir; // served at / when set
    grabcut::Params grabcut;
};

// JSON-over-HTTP annotation API on a dataset:
//   GET  /api/images                 list of rectified images
//   GET  /api/images/{id}            rectified image as PNG
//   POST /api/sessions/{id}/init     {"rect": {x, y, width, height}}
//   POST /api/sessions/{id}/strokes  {"strokes": [{points, label, brushRadius}]}
//   POST /api/sessions/{id}/undo
//   GET  /api/sessions/{id}/mask     single-channel 0/255 PNG
//   POST /api/sessions/{id}/finalize writes masks/manual/{id}.png
// Mutating requests on a session are exclusive; a second one arriving while
// the first runs gets 409, as does anything after finalize.
class AnnotationService {
public:
    AnnotationService(DatasetManifest manifest, ServiceOptions opt = {});
    ~AnnotationService();
    AnnotationService(const AnnotationService&) = delete;
    AnnotationService& operator=(const AnnotationService&) = delete;

    int start(); // binds and serves on a background thread; returns the port
    void wait();
    void stop();

    DatasetManifest manifest() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace lichen::pipeline
