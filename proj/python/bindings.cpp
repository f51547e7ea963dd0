#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>

#include "datapool/dedup.hpp"
#include "datapool/error.hpp"
#include "datapool/filters.hpp"
#include "datapool/ledger.hpp"
#include "datapool/pipeline.hpp"
#include "datapool/platform.hpp"
#include "datapool/revenue.hpp"
#include "datapool/text.hpp"
#include "datapool/time.hpp"

namespace py = pybind11;
using namespace datapool;

namespace {

py::dict split_to_dict(const RewardSplit& split) {
  py::dict rewards;
  for (const auto& l : split.lines) rewards[py::str(l.contributor_id)] = l.reward_minor;
  py::dict out;
  out["pool_minor"] = split.pool_minor;
  out["undistributed_minor"] = split.undistributed_minor;
  out["no_contributions"] = split.no_contributions;
  out["rewards"] = rewards;
  return out;
}

py::object parse_json(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json dump_json(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

FilterRuleSet rules_from(const std::optional<std::string>& config_text) {
  return config_text ? FilterRuleSet::parse(*config_text) : FilterRuleSet{};
}

// Wraps Platform with a clock that is either wall time or pinned by the caller.
class PyPlatform {
 public:
  PyPlatform(const std::filesystem::path& data_dir, const std::string& admin_token,
             const std::optional<std::string>& genesis, std::int64_t alpha_ppm, std::int64_t epoch_length_days,
             const std::string& currency, bool sync)
      : pinned_(std::make_shared<std::optional<Timestamp>>()) {
    Platform::Options opts;
    opts.data_dir = data_dir;
    opts.sync = sync;
    opts.admin_token = admin_token;
    opts.config.alpha_ppm = alpha_ppm;
    opts.config.epoch_length_days = epoch_length_days;
    opts.config.currency_code = currency;
    if (genesis) {
      opts.genesis = parse_rfc3339(*genesis);
      *pinned_ = opts.genesis;
    }
    auto pinned = pinned_;
    opts.clock = [pinned] {
      if (*pinned) return **pinned;
      return std::chrono::floor<Seconds>(std::chrono::system_clock::now());
    };
    platform_ = std::make_unique<Platform>(std::move(opts));
  }

  void set_time(const std::optional<std::string>& t) {
    *pinned_ = t ? std::optional<Timestamp>(parse_rfc3339(*t)) : std::nullopt;
  }
  Platform& p() { return *platform_; }

 private:
  std::shared_ptr<std::optional<Timestamp>> pinned_;
  std::unique_ptr<Platform> platform_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Contribution-metered data pool core";

  static py::exception<Error> error_type(m, "DatapoolError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object err = py::handle(error_type.ptr())(py::str(e.what()));
      err.attr("code") = e.code();
      PyErr_SetObject(error_type.ptr(), err.ptr());
    }
  });

  m.def("reward_pool", &reward_pool, py::arg("revenue_minor"), py::arg("alpha_ppm"));
  m.def(
      "compute_rewards",
      [](const TokenSnapshot& tokens, Minor revenue, std::int64_t alpha) {
        return split_to_dict(compute_rewards(tokens, revenue, alpha));
      },
      py::arg("tokens"), py::arg("revenue_minor"), py::arg("alpha_ppm"));
  m.def(
      "contribution_ratio",
      [](const std::string& id, const TokenSnapshot& tokens) {
        const Rational r = contribution_ratio(id, tokens);
        return py::make_tuple(r.num, r.den, r.to_decimal());
      },
      py::arg("contributor_id"), py::arg("tokens"));
  m.def(
      "expected_payout",
      [](const std::string& now, const std::string& period_start, const std::string& period_end,
         Minor accrued, const TokenSnapshot& tokens, std::int64_t alpha) {
        PayoutEpoch epoch;
        epoch.period_start = parse_rfc3339(period_start);
        epoch.period_end = parse_rfc3339(period_end);
        return parse_json(to_json(expected_payout(parse_rfc3339(now), epoch, accrued, tokens, alpha)));
      },
      py::arg("now"), py::arg("period_start"), py::arg("period_end"), py::arg("accrued_revenue_minor"),
      py::arg("tokens"), py::arg("alpha_ppm"));

  m.def("normalize", [](const std::string& raw) { return normalize(raw); }, py::arg("text"));
  m.def("count_tokens", [](const std::string& text) { return count_tokens(text); }, py::arg("normalized_text"));
  m.def(
      "apply_filters",
      [](const std::string& text, const std::optional<std::string>& config) {
        return apply_filters(text, rules_from(config)).rejection;
      },
      py::arg("normalized_text"), py::arg("filter_config") = py::none());
  m.def(
      "run_pipeline",
      [](const std::string& jsonl, const std::optional<std::string>& config) {
        DedupIndex index;
        return parse_json(run_pipeline("local", jsonl, rules_from(config), index, "local",
                                       Timestamp{}).report.to_json());
      },
      py::arg("jsonl"), py::arg("filter_config") = py::none());

  m.def("exact_fingerprint", [](const std::string& text) { return exact_fingerprint(text).hex(); },
        py::arg("normalized_text"));
  m.def(
      "minhash_signature",
      [](const std::string& text, std::uint32_t k, std::uint32_t perms) { return minhash_signature(text, k, perms); },
      py::arg("normalized_text"), py::arg("shingle_size") = 5, py::arg("num_perms") = 128);
  m.def("estimate_jaccard", &estimate_jaccard, py::arg("a"), py::arg("b"));

  py::class_<DedupIndex>(m, "DedupIndex")
      .def(py::init<>())
      .def("__len__", &DedupIndex::size)
      .def(
          "add",
          [](DedupIndex& self, const std::string& text, const std::string& owner) {
            const std::string n = normalize(text);
            const Signature sig = MinHasher(self.minhash_params()).sign(n);
            return self.insert(exact_fingerprint(n), sig, CorpusSource::contributor, owner, Timestamp{}) ==
                   InsertOutcome::inserted;
          },
          py::arg("text"), py::arg("owner") = "")
      .def(
          "query",
          [](const DedupIndex& self, const std::string& text) -> py::object {
            const std::string n = normalize(text);
            const auto q = self.query(exact_fingerprint(n), MinHasher(self.minhash_params()).sign(n));
            if (const auto* e = std::get_if<ExactHit>(&q)) return py::make_tuple("exact", e->doc_id, 1.0);
            if (const auto* h = std::get_if<NearHit>(&q)) return py::make_tuple("near", h->doc_id, h->estimated_jaccard);
            return py::none();
          },
          py::arg("text"));

  py::class_<PyPlatform>(m, "Platform")
      .def(py::init<const std::filesystem::path&, const std::string&, const std::optional<std::string>&,
                    std::int64_t, std::int64_t, const std::string&, bool>(),
           py::arg("data_dir"), py::arg("admin_token"), py::arg("genesis") = py::none(),
           py::arg("alpha_ppm") = 100'000, py::arg("epoch_length_days") = 30, py::arg("currency") = "USD",
           py::arg("sync") = true)
      .def("set_time", &PyPlatform::set_time, py::arg("rfc3339"))
      .def("register_contributor",
           [](PyPlatform& self, const std::string& name) {
             const auto reg = self.p().register_contributor(name);
             return py::make_tuple(reg.contributor_id, reg.token);
           })
      .def("submit", [](PyPlatform& self, const std::string& id, std::string body) {
        return self.p().submit(id, std::move(body));
      })
      .def("process_all", [](PyPlatform& self) { self.p().process_all(); })
      .def("report",
           [](PyPlatform& self, const std::string& submission_id) -> py::object {
             const auto s = self.p().submission(submission_id);
             if (!s) return py::none();
             return parse_json(s->to_json());
           })
      .def("ingest_revenue",
           [](PyPlatform& self, const py::object& event) {
             return to_string(self.p().ingest_revenue(RevenueEvent::from_json(dump_json(event))).status);
           })
      .def("metrics", [](PyPlatform& self, const std::string& id) { return parse_json(self.p().metrics(id).to_json()); })
      .def("open_epoch", [](PyPlatform& self) { return parse_json(to_json(self.p().open_epoch())); })
      .def(
          "close_epoch",
          [](PyPlatform& self, std::uint64_t epoch_id, bool override_early) {
            self.p().close_epoch(epoch_id, std::nullopt, override_early);
            return parse_json(nlohmann::json::parse(self.p().statement_json(epoch_id, std::nullopt)));
          },
          py::arg("epoch_id"), py::arg("override") = false)
      .def("set_alpha", [](PyPlatform& self, std::int64_t ppm) { self.p().set_alpha(ppm); })
      .def("snapshot", [](PyPlatform& self) { self.p().snapshot(); });
}
