#include "pacq/synth/dataset_io.hpp"

#include <fstream>

#include "json.hpp"
#include "pacq/common/binio.hpp"

namespace pacq::synth {

namespace {
constexpr char kMagic[4] = {'P', 'A', 'C', 'Q'};
constexpr std::uint16_t kVersion = 1;
}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  const auto& cfg = ds.cfg;
  BinWriter w(path);
  w.bytes(kMagic, 4);
  w.u16(kVersion);

  w.mark_crc_start();
  w.u32(static_cast<std::uint32_t>(cfg.n_views));
  w.u32(static_cast<std::uint32_t>(cfg.embed_dim));
  w.u32(static_cast<std::uint32_t>(cfg.n_classes));
  w.u64(static_cast<std::uint64_t>(ds.studies.size()));
  w.i64(cfg.n_patients);
  for (const auto& vs : cfg.view_signal) {
    w.f64(vs.w_as);
    w.f64(vs.w_ef);
  }
  w.f64(cfg.quality_spread);
  w.f64(cfg.noise_std);
  w.u64(cfg.seed);
  w.write_crc();

  w.mark_crc_start();
  for (const auto& s : ds.studies) {
    w.i64(s.study_id);
    w.f64(s.y_as_value);
    w.u32(static_cast<std::uint32_t>(s.y_as_class));
    w.f64(s.y_ef);
    w.bytes(s.qualities.data(), s.qualities.size() * sizeof(double));
    w.bytes(s.embeddings.data(), s.embeddings.size() * sizeof(double));
  }
  w.write_crc();
  w.close();
}

Dataset load_dataset(const std::string& path) {
  BinReader r(path);
  r.expect_magic(kMagic, "dataset");
  std::uint16_t version = r.u16();
  if (version != kVersion)
    throw DataError(DataError::Kind::Version,
                    "dataset: unsupported version " + std::to_string(version));

  Dataset ds;
  r.mark_crc_start();
  ds.cfg.n_views = static_cast<int>(r.u32());
  ds.cfg.embed_dim = static_cast<int>(r.u32());
  ds.cfg.n_classes = static_cast<int>(r.u32());
  std::uint64_t n_studies = r.u64();
  ds.cfg.n_patients = r.i64();
  if (ds.cfg.n_views <= 0 || ds.cfg.n_views > 64 || ds.cfg.embed_dim <= 0 ||
      ds.cfg.embed_dim > 65536)
    throw DataError(DataError::Kind::Dimension, "dataset: implausible dimensions");
  ds.cfg.view_signal.resize(ds.cfg.n_views);
  for (auto& vs : ds.cfg.view_signal) {
    vs.w_as = r.f64();
    vs.w_ef = r.f64();
  }
  ds.cfg.quality_spread = r.f64();
  ds.cfg.noise_std = r.f64();
  ds.cfg.seed = r.u64();
  r.check_crc("dataset header");

  r.mark_crc_start();
  ds.studies.resize(n_studies);
  std::size_t emb_len = static_cast<std::size_t>(ds.cfg.n_views) * ds.cfg.embed_dim;
  for (auto& s : ds.studies) {
    s.study_id = r.i64();
    s.y_as_value = r.f64();
    s.y_as_class = static_cast<int>(r.u32());
    s.y_ef = r.f64();
    s.qualities.resize(ds.cfg.n_views);
    r.bytes(s.qualities.data(), s.qualities.size() * sizeof(double));
    s.embeddings.resize(emb_len);
    r.bytes(s.embeddings.data(), emb_len * sizeof(double));
  }
  r.check_crc("dataset records");
  return ds;
}

void save_split(const DatasetSplit& split, const std::string& path) {
  nlohmann::json j;
  j["train"] = split.train;
  j["val"] = split.val;
  j["test"] = split.test;
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Kind::Other, "cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

DatasetSplit load_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Kind::Other, "cannot open for reading: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(DataError::Kind::Other, "split file parse error: " + std::string(e.what()));
  }
  DatasetSplit sp;
  sp.train = j.at("train").get<std::vector<std::int64_t>>();
  sp.val = j.at("val").get<std::vector<std::int64_t>>();
  sp.test = j.at("test").get<std::vector<std::int64_t>>();
  return sp;
}

}  // namespace pacq::synth
