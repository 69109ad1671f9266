#include "lichen/service.hpp"

#include <fstream>
#include <iterator>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <thread>

#include <httplib.h>

#include "lichen/error.hpp"

namespace lichen::pipeline {

using nlohmann::json;

namespace {

struct Slot {
    std::shared_mutex mutex;
    std::unique_ptr<AnnotationSession> session;
    bool finalized = false;
};

void sendJson(httplib::Response& res, const json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
}

void sendError(httplib::Response& res, int status, const std::string& msg) {
    sendJson(res, {{"error", msg}}, status);
}

std::string readFile(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw NotFound("missing file " + p.filename().string());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

json sessionState(const AnnotationSession& s) {
    return {{"image", s.imageId()},
            {"mask", "/api/sessions/" + s.imageId() + "/mask?v=" + std::to_string(s.version())},
            {"version", s.version()},
            {"depth", s.historyDepth()},
            {"iterations", s.iterations()}};
}

json parseBody(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        return json::parse(req.body);
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("request body is not JSON: ") + e.what());
    }
}

} // namespace

struct AnnotationService::Impl {
    DatasetManifest manifest;
    ServiceOptions opt;
    httplib::Server server;
    std::thread thread;
    int port = 0;
    mutable std::mutex manifestMutex;
    std::mutex slotsMutex;
    std::map<std::string, std::shared_ptr<Slot>> slots;

    Impl(DatasetManifest m, ServiceOptions o) : manifest(std::move(m)), opt(std::move(o)) {}

    bool isRectified(const std::string& id) {
        std::lock_guard lk(manifestMutex);
        const ImageEntry* e = manifest.find(id);
        if (!e) throw NotFound("unknown image '" + id + "'");
        return e->status != Stage::Raw;
    }

    std::shared_ptr<Slot> slot(const std::string& id, bool create) {
        if (!isRectified(id)) throw NotFound("image '" + id + "' has not been rectified");
        std::lock_guard lk(slotsMutex);
        auto it = slots.find(id);
        if (it != slots.end()) return it->second;
        if (!create) throw NotFound("no annotation session for '" + id + "'");
        return slots[id] = std::make_shared<Slot>();
    }

    // Runs `fn` with exclusive access to the session, refusing on contention.
    template <class Fn>
    void mutate(const std::string& id, bool create, Fn&& fn) {
        const auto s = slot(id, create);
        std::unique_lock lk(s->mutex, std::try_to_lock);
        if (!lk.owns_lock()) throw Conflict("session '" + id + "' is busy");
        if (s->finalized) throw Conflict("session '" + id + "' is already finalized");
        fn(*s);
    }

    template <class Fn>
    void guarded(httplib::Response& res, Fn&& fn) {
        try {
            fn();
        } catch (const NotFound& e) {
            sendError(res, 404, e.what());
        } catch (const Conflict& e) {
            sendError(res, 409, e.what());
        } catch (const InvalidArgument& e) {
            sendError(res, 400, e.what());
        } catch (const Error& e) {
            sendError(res, 422, e.what());
        } catch (const std::exception& e) {
            sendError(res, 500, e.what());
        }
    }

    void routes() {
        server.Get("/api/images", [this](const httplib::Request&, httplib::Response& res) {
            guarded(res, [&] {
                json list = json::array();
                std::lock_guard lk(manifestMutex);
                for (const auto& e : manifest.images) {
                    if (e.status == Stage::Raw) continue;
                    json j = {{"id", e.id},
                              {"status", toString(e.status)},
                              {"split", toString(e.split)},
                              {"manual_mask", e.manualMask},
                              {"url", "/api/images/" + e.id}};
                    j["mm_per_px"] = e.mmPerPx ? json(*e.mmPerPx) : json(nullptr);
                    list.push_back(j);
                }
                sendJson(res, list);
            });
        });

        server.Get(R"(/api/images/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const std::string id = req.matches[1];
                if (!isRectified(id)) throw NotFound("image '" + id + "' has not been rectified");
                res.set_content(readFile(manifest.rectifiedPath(id)), "image/png");
            });
        });

        server.Post(R"(/api/sessions/([^/]+)/init)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const std::string id = req.matches[1];
                const json body = parseBody(req);
                grabcut::Rect rect;
                try {
                    const json& r = body.at("rect");
                    rect = {r.at("x"), r.at("y"), r.at("width"), r.at("height")};
                } catch (const json::exception& e) {
                    throw InvalidArgument(std::string("init needs rect {x, y, width, height}: ") + e.what());
                }
                mutate(id, true, [&](Slot& s) {
                    if (!s.session)
                        s.session = std::make_unique<AnnotationSession>(id, readImage(manifest.rectifiedPath(id)),
                                                                         opt.grabcut);
                    s.session->init(rect);
                    sendJson(res, sessionState(*s.session));
                });
            });
        });

        server.Post(R"(/api/sessions/([^/]+)/strokes)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const std::string id = req.matches[1];
                const json body = parseBody(req);
                if (!body.contains("strokes") || !body["strokes"].is_array())
                    throw InvalidArgument("strokes request needs a 'strokes' array");
                std::vector<grabcut::Stroke> batch;
                for (const auto& s : body["strokes"]) batch.push_back(strokeFromJson(s));
                mutate(id, false, [&](Slot& s) {
                    if (!s.session) throw Conflict("session has no initial rectangle");
                    s.session->addStrokes(batch);
                    sendJson(res, sessionState(*s.session));
                });
            });
        });

        server.Post(R"(/api/sessions/([^/]+)/undo)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                mutate(req.matches[1], false, [&](Slot& s) {
                    if (!s.session) throw Conflict("session has no initial rectangle");
                    s.session->undo();
                    sendJson(res, sessionState(*s.session));
                });
            });
        });

        server.Get(R"(/api/sessions/([^/]+)/mask)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto s = slot(req.matches[1], false);
                std::shared_lock lk(s->mutex);
                if (!s->session) throw NotFound("session has no mask yet");
                const auto png = encodeMaskPng(s->session->mask());
                res.set_content(std::string(png.begin(), png.end()), "image/png");
            });
        });

        server.Post(R"(/api/sessions/([^/]+)/finalize)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const std::string id = req.matches[1];
                mutate(id, false, [&](Slot& s) {
                    if (!s.session) throw Conflict("session has no initial rectangle");
                    writeMask(manifest.manualMaskPath(id), s.session->mask());
                    {
                        std::ofstream os(manifest.sessionPath(id));
                        os << s.session->historyJson().dump(2) << '\n';
                        if (!os) throw IoError("cannot write session history");
                    }
                    {
                        std::lock_guard lk(manifestMutex);
                        ImageEntry* e = manifest.find(id);
                        e->manualMask = true;
                        if (e->status == Stage::Rectified) e->status = Stage::Annotated;
                        saveManifest(manifest);
                    }
                    s.finalized = true;
                    sendJson(res, {{"image", id},
                                   {"written", "masks/manual/" + id + ".png"},
                                   {"depth", s.session->historyDepth()}});
                });
            });
        });

        if (!opt.uiDir.empty()) server.set_mount_point("/", opt.uiDir.string());
    }
};

AnnotationService::AnnotationService(DatasetManifest manifest, ServiceOptions opt)
    : impl_(std::make_unique<Impl>(std::move(manifest), std::move(opt))) {
    impl_->routes();
}

AnnotationService::~AnnotationService() { stop(); }

int AnnotationService::start() {
    if (impl_->thread.joinable()) return impl_->port;
    const int port = impl_->opt.port > 0
                         ? (impl_->server.bind_to_port(impl_->opt.host, impl_->opt.port) ? impl_->opt.port : -1)
                         : impl_->server.bind_to_any_port(impl_->opt.host);
    if (port <= 0) throw IoError("cannot bind " + impl_->opt.host + ":" + std::to_string(impl_->opt.port));
    impl_->port = port;
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port;
}

void AnnotationService::wait() {
    if (impl_->thread.joinable()) impl_->thread.join();
}

void AnnotationService::stop() {
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

DatasetManifest AnnotationService::manifest() const {
    std::lock_guard lk(impl_->manifestMutex);
    return impl_->manifest;
}

} // namespace lichen::pipeline
