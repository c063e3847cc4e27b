#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "longtail/experiment.hpp"
#include "longtail/gradagg.hpp"
#include "longtail/metrics.hpp"
#include "longtail/model.hpp"
#include "longtail/numeric.hpp"
#include "longtail/plugin.hpp"
#include "longtail/verify.hpp"

namespace py = pybind11;
using namespace longtail;

namespace {

std::map<std::string, std::vector<double>> gradmap_to_py(const GradMap& g) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [name, arr] : g) out.emplace(name, arr.values);
  return out;
}

GradMap gradmap_from_py(const std::map<std::string, std::vector<double>>& g,
                        const std::map<std::string, std::vector<std::size_t>>& shapes) {
  GradMap out;
  for (const auto& [name, values] : g) {
    auto it = shapes.find(name);
    DenseArray a = it != shapes.end() ? DenseArray::zeros(it->second)
                                      : DenseArray::zeros({values.size()});
    if (a.numel() != values.size())
      throw ArgumentError("gradient size does not match its shape at " + name);
    a.values = values;
    out.emplace(name, std::move(a));
  }
  return out;
}

Batch batch_from_py(const std::vector<std::int64_t>& users,
                    const std::vector<std::int64_t>& items,
                    const std::vector<std::vector<std::int64_t>>& sequences,
                    const std::vector<double>& labels, int group) {
  Batch b;
  b.users = users;
  b.items = items;
  b.sequences = sequences;
  b.labels = labels;
  b.group = group;
  return b;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Long-tail sequential recommender: deconfounded gradient aggregation "
            "with per-group plugin networks";

  py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
  py::register_exception<StateError>(m, "StateError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  // numeric kernels
  m.def("sigmoid", [](double x) { return sigmoid(x); });
  m.def("sigmoid_vec", [](const std::vector<double>& x) {
    return sigmoid(std::span<const double>(x));
  });
  m.def("bce_loss", [](const std::vector<double>& p, const std::vector<double>& y) {
    return bce_loss(p, y);
  });

  // model
  py::class_<TrunkParams>(m, "TrunkParams")
      .def_property_readonly("arch", [](const TrunkParams& t) { return arch_name(t.arch); })
      .def_property_readonly("num_users", [](const TrunkParams& t) { return t.dims.num_users; })
      .def_property_readonly("num_items", [](const TrunkParams& t) { return t.dims.num_items; })
      .def("param_names",
           [](const TrunkParams& t) {
             std::vector<std::string> names;
             for (const auto& p : t.params) names.push_back(p.name);
             return names;
           })
      .def("values",
           [](const TrunkParams& t, const std::string& name) {
             return t.tensor(name).data.values;
           })
      .def("shape",
           [](const TrunkParams& t, const std::string& name) {
             return t.tensor(name).data.shape;
           })
      .def("section", [](const TrunkParams& t, const std::string& name) {
        return std::string(section_name(t.tensor(name).section));
      });

  m.def(
      "build_model",
      [](const std::string& arch, std::size_t num_users, std::size_t num_items,
         std::size_t embedding_dim, std::size_t hidden_dim, std::size_t max_seq_len,
         std::uint64_t seed, std::size_t attention_dim, std::size_t extractor_layers) {
        ModelDims dims;
        dims.embedding_dim = embedding_dim;
        dims.hidden_dim = hidden_dim;
        dims.max_seq_len = max_seq_len;
        dims.attention_dim = attention_dim;
        dims.extractor_layers = extractor_layers;
        return build_model(arch_from_name(arch), num_users, num_items, dims, seed);
      },
      py::arg("arch"), py::arg("num_users"), py::arg("num_items"),
      py::arg("embedding_dim") = 16, py::arg("hidden_dim") = 32,
      py::arg("max_seq_len") = 50, py::arg("seed") = 1, py::arg("attention_dim") = 16,
      py::arg("extractor_layers") = 1);

  m.def(
      "predict",
      [](const TrunkParams& trunk, const std::vector<std::int64_t>& users,
         const std::vector<std::int64_t>& items,
         const std::vector<std::vector<std::int64_t>>& sequences) {
        return predict(trunk, batch_from_py(users, items, sequences, {}, 0));
      },
      py::arg("trunk"), py::arg("users"), py::arg("items"), py::arg("sequences"));

  m.def(
      "backward",
      [](const TrunkParams& trunk, const std::vector<std::int64_t>& users,
         const std::vector<std::int64_t>& items,
         const std::vector<std::vector<std::int64_t>>& sequences,
         const std::vector<double>& labels) {
        BackwardResult r = backward(trunk, batch_from_py(users, items, sequences, labels, 0));
        return py::make_tuple(r.loss, gradmap_to_py(r.grads));
      },
      py::arg("trunk"), py::arg("users"), py::arg("items"), py::arg("sequences"),
      py::arg("labels"));

  // grouping + aggregation
  py::class_<GroupAssignment>(m, "GroupAssignment")
      .def_readonly("n", &GroupAssignment::n)
      .def_readonly("total", &GroupAssignment::total)
      .def_readonly("counts", &GroupAssignment::counts)
      .def_property_readonly("group_of",
                             [](const GroupAssignment& a) { return a.group_of; })
      .def("group_for", &GroupAssignment::group_for, py::arg("user"),
           py::arg("activeness_hint") = 0);

  m.def(
      "assign_groups",
      [](const std::map<std::int64_t, std::int64_t>& activeness, int n,
         const std::map<std::int64_t, std::int64_t>& samples_per_user,
         const std::string& balance) {
        ActivenessIndex idx;
        idx.per_user = activeness;
        return assign_groups(idx, n, samples_per_user, group_balance_from_name(balance));
      },
      py::arg("activeness"), py::arg("n"), py::arg("samples_per_user"),
      py::arg("balance") = "samples");

  m.def(
      "aggregate",
      [](const std::map<int, std::map<std::string, std::vector<double>>>& per_group,
         const std::vector<std::int64_t>& counts,
         const std::map<std::string, std::vector<std::size_t>>& shapes) {
        GroupAssignment a;
        a.n = static_cast<int>(counts.size());
        a.counts = counts;
        a.total = 0;
        for (auto c : counts) a.total += c;
        GradientQueue queue(a.n);
        for (const auto& [j, grads] : per_group) queue.push(j, gradmap_from_py(grads, shapes));
        return gradmap_to_py(queue.aggregate(GroupWeights::uniform(a)));
      },
      py::arg("per_group"), py::arg("counts"),
      py::arg("shapes") = std::map<std::string, std::vector<std::size_t>>{},
      "Backdoor-adjusted aggregation of per-group gradients with a uniform prior");

  m.def("effective_weight", [](const std::vector<std::int64_t>& counts, int j) {
    GroupAssignment a;
    a.n = static_cast<int>(counts.size());
    a.counts = counts;
    a.total = 0;
    for (auto c : counts) a.total += c;
    return GroupWeights::uniform(a).effective_weight(j);
  });

  // metrics
  m.def(
      "auc",
      [](const std::vector<double>& pos, const std::vector<double>& neg,
         const std::string& tie) { return auc(pos, neg, tie_policy_from_name(tie)); },
      py::arg("positives"), py::arg("negatives"), py::arg("tie") = "strict");
  m.def("hitrate_at_k", [](const std::map<std::int64_t, int>& ranks, int k) {
    return hitrate_at_k(ranks, k);
  });
  m.def("ndcg_at_k", [](const std::map<std::int64_t, int>& ranks, int k) {
    return ndcg_at_k(ranks, k);
  });

  // synthetic data
  m.def(
      "generate_synthetic",
      [](int groups, const std::vector<int>& users_per_group,
         const std::vector<std::pair<int, int>>& activeness, int num_items, int shared_dim,
         int group_dim, double noise, std::uint64_t seed) {
        SynthSpec spec;
        spec.groups = groups;
        if (!users_per_group.empty()) spec.users_per_group = users_per_group;
        if (!activeness.empty()) spec.activeness = activeness;
        spec.num_items = num_items;
        spec.shared_dim = shared_dim;
        spec.group_dim = group_dim;
        spec.noise = noise;
        spec.seed = seed;
        InteractionLog log = generate_synthetic(spec);
        std::vector<std::tuple<std::int64_t, std::int64_t, double, double>> out;
        out.reserve(log.records.size());
        for (const auto& r : log.records)
          out.emplace_back(r.user, r.item, r.timestamp, r.label);
        return out;
      },
      py::arg("groups") = 5, py::arg("users_per_group") = std::vector<int>{},
      py::arg("activeness") = std::vector<std::pair<int, int>>{}, py::arg("num_items") = 200,
      py::arg("shared_dim") = 8, py::arg("group_dim") = 2, py::arg("noise") = 0.6,
      py::arg("seed") = 1);

  // experiment driver
  m.def(
      "run_experiment",
      [](const std::string& config_json) {
        ExperimentConfig cfg = config_from_json(Json::parse(config_json));
        ExperimentResult res = run_experiment(cfg);
        return res.report_json;
      },
      py::arg("config_json"),
      "Run the full pipeline from a JSON config string; returns the report JSON");

  m.def(
      "verify",
      [](const std::string& suite) {
        std::vector<std::pair<std::string, bool>> out;
        for (const auto& r : run_verify(suite)) out.emplace_back(r.suite, r.passed);
        return out;
      },
      py::arg("suite") = "all");
}
