#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "memeguard/annotation/server.h"

#include <httplib.h>
#include <openssl/crypto.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "memeguard/common/errors.h"
#include "memeguard/common/text.h"

namespace memeguard::annotation {
namespace {

using nlohmann::json;

class Unauthorized : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void Reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json Body(const httplib::Request& req) {
  json j = json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw ValidationError("request body must be a JSON object");
  return j;
}

template <typename T>
T Field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ValidationError(std::string("field '") + key + "' has the wrong type");
  }
}

std::string Param(const httplib::Request& req, const char* key) {
  if (!req.has_param(key))
    throw ValidationError(std::string("missing query parameter '") + key + "'");
  return req.get_param_value(key);
}

Stage StageParam(const std::string& s) {
  auto stage = ParseStage(s);
  if (!stage) throw ValidationError("stage must be I or II");
  return *stage;
}

std::string MimeType(const std::filesystem::path& p) {
  std::string ext = text::ToLowerAscii(p.extension().string());
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  return "application/octet-stream";
}

}  // namespace

ServerOptions ServerOptions::FromEnv() {
  ServerOptions o;
  if (const char* token = std::getenv("MEMEGUARD_ADMIN_TOKEN")) o.admin_token = token;
  return o;
}

struct AnnotationServer::Impl {
  AnnotationStore& store;
  ServerOptions options;
  httplib::Server server;

  Impl(AnnotationStore& s, ServerOptions o) : store(s), options(std::move(o)) {}

  void RequireAdmin(const httplib::Request& req) const {
    if (options.admin_token.empty()) throw Unauthorized("admin endpoints are disabled");
    std::string expected = "Bearer " + options.admin_token;
    std::string got = req.get_header_value("Authorization");
    if (got.size() != expected.size() ||
        CRYPTO_memcmp(got.data(), expected.data(), got.size()) != 0) {
      throw Unauthorized("missing or wrong admin token");
    }
  }

  // Runs `fn` and maps the error families onto status codes.
  httplib::Server::Handler Wrap(std::function<void(const httplib::Request&, httplib::Response&)> fn,
                                bool admin = false) {
    return [this, fn, admin](const httplib::Request& req, httplib::Response& res) {
      try {
        if (admin) RequireAdmin(req);
        fn(req, res);
      } catch (const Unauthorized& e) {
        Reply(res, 401, {{"error", e.what()}});
      } catch (const NotFoundError& e) {
        Reply(res, 404, {{"error", e.what()}});
      } catch (const ConflictError& e) {
        Reply(res, 409, {{"error", e.what()}});
      } catch (const ValidationError& e) {
        Reply(res, 400, {{"error", e.what()}});
      } catch (const std::exception& e) {
        Reply(res, 500, {{"error", e.what()}});
      }
    };
  }

  void Routes() {
    server.Get("/api/tasks/next", Wrap([this](const auto& req, auto& res) {
      NextTask next = store.GetNextTask(Param(req, "annotator"));
      if (next.task) {
        Reply(res, 200, {{"task", next.task->ToJson()}});
      } else {
        Reply(res, 200, {{"task", nullptr}, {"reason", next.reason}});
      }
    }));

    server.Post("/api/annotations", Wrap([this](const auto& req, auto& res) {
      json b = Body(req);
      store.SubmitAnnotation(Field<std::string>(b, "annotator"), Field<std::string>(b, "sample"),
                             StageParam(Field<std::string>(b, "stage")),
                             Field<std::string>(b, "label"));
      Reply(res, 201, {{"ok", true}});
    }));

    server.Post("/api/ratings", Wrap([this](const auto& req, auto& res) {
      json b = Body(req);
      Ratings r{Field<int>(b, "completeness"), Field<int>(b, "fluency"), Field<int>(b, "grammar")};
      store.RateSummary(Field<std::string>(b, "annotator"), Field<std::string>(b, "sample"), r);
      Reply(res, 201, {{"ok", true}});
    }));

    server.Get("/api/progress", Wrap([this](const auto& req, auto& res) {
      Progress p = store.GetProgress(Param(req, "annotator"));
      Reply(res, 200,
            {{"submitted_today", p.submitted_today},
             {"cap", p.cap},
             {"remaining_total", p.remaining_total}});
    }));

    server.Get("/api/samples/:id/media", Wrap([this](const auto& req, auto& res) {
      const std::string& id = req.path_params.at("id");
      auto path = store.MediaPath(id);
      if (!path) throw NotFoundError("unknown sample " + id);
      std::ifstream in(*path, std::ios::binary);
      if (!in) throw NotFoundError("image for sample " + id + " is missing");
      std::ostringstream bytes;
      bytes << in.rdbuf();
      res.status = 200;
      res.set_content(bytes.str(), MimeType(*path).c_str());
    }));

    server.Post("/api/admin/annotators", Wrap([this](const auto& req, auto& res) {
      AnnotatorProfile p = AnnotatorProfile::FromJson(Body(req));
      store.AddAnnotator(p);
      Reply(res, 201, p.ToJson());
    }, true));

    server.Post("/api/admin/batches", Wrap([this](const auto& req, auto& res) {
      json b = Body(req);
      Stage stage = StageParam(Field<std::string>(b, "stage"));
      std::vector<Assignment> assignments;
      for (const auto& a : Field<json>(b, "assignments")) {
        assignments.push_back({Field<std::string>(a, "sample"),
                               Field<std::vector<std::string>>(a, "annotators")});
      }
      Reply(res, 201, store.CreateBatch(stage, assignments).ToJson());
    }, true));

    server.Post("/api/admin/finalize", Wrap([this](const auto& req, auto& res) {
      FinalizeResult r = store.FinalizeLabels(StageParam(Param(req, "stage")));
      Reply(res, r.blocked.empty() ? 200 : 409, r.ToJson());
    }, true));

    server.Get("/api/admin/agreement", Wrap([this](const auto& req, auto& res) {
      Stage stage = StageParam(Param(req, "stage"));
      Reply(res, 200, store.ComputeAgreement(stage).ToJson(AssignableLabels(stage)));
    }, true));

    server.Get("/api/admin/ratings", Wrap([this](const auto&, auto& res) {
      Reply(res, 200, store.SummaryRatingReport().ToJson());
    }, true));

    server.Get("/api/admin/records", Wrap([this](const auto& req, auto& res) {
      std::optional<Stage> stage;
      if (req.has_param("stage")) stage = StageParam(req.get_param_value("stage"));
      json out = json::array();
      for (const auto& r : store.Records(stage)) out.push_back(r.ToJson());
      Reply(res, 200, {{"records", out}});
    }, true));
  }
};

AnnotationServer::AnnotationServer(AnnotationStore& store, ServerOptions options)
    : impl_(std::make_unique<Impl>(store, std::move(options))) {
  int threads = std::max(1, impl_->options.threads);
  impl_->server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  impl_->Routes();
}

AnnotationServer::~AnnotationServer() { Stop(); }

int AnnotationServer::Bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool AnnotationServer::Listen() { return impl_->server.listen_after_bind(); }

void AnnotationServer::Stop() {
  if (impl_) impl_->server.stop();
}

bool AnnotationServer::running() const { return impl_->server.is_running(); }

}  // namespace memeguard::annotation
