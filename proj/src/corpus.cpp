#include "ticbench/corpus.hpp"

#include "ticbench/entropy.hpp"
#include "ticbench/errors.hpp"

#include <json.hpp>

namespace ticbench {

const SeriesDataset& Corpus::dataset(const std::string& id) const {
  for (const auto& ds : datasets) {
    if (ds.dataset_id == id) return ds;
  }
  throw JoinError("corpus has no dataset '" + id + "'");
}

namespace {
std::string cell_file(const CellKey& key, const char* ext) {
  return key.dataset_id + "__" + to_string(key.task) + ext;
}
}  // namespace

std::filesystem::path embeddings_path(const std::filesystem::path& root, const CellKey& key) {
  return root / "embeddings" / key.model_id / cell_file(key, ".tteb");
}

std::filesystem::path horizon_path(const std::filesystem::path& root, const CellKey& key) {
  return root / "horizon" / key.model_id / cell_file(key, ".tteh");
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& root) {
  nlohmann::ordered_json m;
  m["models"] = corpus.model_ids;
  std::vector<std::string> ds_ids, tasks;
  for (const auto& ds : corpus.datasets) ds_ids.push_back(ds.dataset_id);
  for (auto t : corpus.tasks) tasks.push_back(to_string(t));
  m["datasets"] = ds_ids;
  m["tasks"] = tasks;
  m["windows_per_dataset"] = corpus.windows_per_dataset;
  m["generator"] = corpus.generator.empty() ? nlohmann::ordered_json::object()
                                            : nlohmann::ordered_json::parse(corpus.generator);

  for (const auto& ds : corpus.datasets) {
    atomic_write(root / "datasets" / (ds.dataset_id + ".csv"), dataset_to_csv(ds));
  }
  for (const auto& [key, emb] : corpus.embeddings) write_embeddings(embeddings_path(root, key), emb);
  for (const auto& [key, pairs] : corpus.horizon) write_pairs(horizon_path(root, key), pairs);
  atomic_write(root / "performance.csv", performance_to_csv(corpus.records));
  atomic_write(root / "manifest.json", m.dump(2) + "\n");
}

Corpus load_corpus(const std::filesystem::path& root) {
  auto manifest_path = root / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) {
    throw FormatError("no corpus manifest at " + manifest_path.string());
  }
  Corpus c;
  try {
    auto m = nlohmann::json::parse(read_file(manifest_path));
    c.model_ids = m.at("models").get<std::vector<std::string>>();
    for (const auto& t : m.at("tasks")) c.tasks.push_back(parse_task_name(t.get<std::string>()));
    c.windows_per_dataset = m.at("windows_per_dataset").get<std::size_t>();
    c.generator = m.value("generator", nlohmann::json::object()).dump();
    for (const auto& id : m.at("datasets")) {
      auto name = id.get<std::string>();
      c.datasets.push_back(load_dataset(root / "datasets" / (name + ".csv"), name));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  for (const auto& model : c.model_ids) {
    for (const auto& ds : c.datasets) {
      for (auto task : c.tasks) {
        CellKey key{model, ds.dataset_id, task};
        auto emb = embeddings_path(root, key);
        if (std::filesystem::exists(emb)) {
          c.embeddings.emplace(key, load_embeddings(emb, model, profile_scope(ds.dataset_id, task)));
        }
        auto hz = horizon_path(root, key);
        if (std::filesystem::exists(hz)) c.horizon.emplace(key, load_pairs(hz));
      }
    }
  }
  c.records = load_performance(root / "performance.csv");
  return c;
}

}  // namespace ticbench
