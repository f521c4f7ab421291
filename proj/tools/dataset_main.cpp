#include <iomanip>
#include <iostream>

#include "cityalign/dataset.hpp"
#include "cityalign/image_io.hpp"
#include "cityalign/json_io.hpp"
#include "cli_common.hpp"

using namespace cityalign;

namespace {

SplitLabel parse_label(const std::string& s) {
  if (s == "train") return SplitLabel::Train;
  if (s == "valid") return SplitLabel::Valid;
  if (s == "test") return SplitLabel::Test;
  if (s == "excluded") return SplitLabel::Excluded;
  throw FormatError("unknown split label " + s);
}

std::vector<double> read_depth(const std::string& path) {
  int w = 0, h = 0, c = 0;
  const auto raw = read_pfm(path, w, h, c);
  if (c != 1) throw FormatError(path + " is not a single-channel depth map");
  return {raw.begin(), raw.end()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dataset bookkeeping"};
  app.require_subcommand(1);

  std::string records_path, out_path, splits_path, products_dir, quality_path, pred_path, gt_path;
  std::string kind = "random";
  SplitSpec spec;
  std::vector<double> fractions{0.8, 0.1, 0.1};

  auto* split = app.add_subcommand("split", "Assign viewpoints to train/valid/test");
  split->add_option("--records", records_path)->required();
  split->add_option("--kind", kind)->check(CLI::IsMember({"random", "spatial"}));
  split->add_option("--seed", spec.seed);
  split->add_option("--fractions", fractions)->delimiter(',')->expected(3);
  split->add_option("--cell", spec.spatial_cell, "Spatial cell side, meters");
  split->add_option("--out", out_path)->required();

  auto* manifest = app.add_subcommand("manifest", "List view products with split and quality flags");
  manifest->add_option("--records", records_path)->required();
  manifest->add_option("--splits", splits_path, "Output of `dataset split`")->required();
  manifest->add_option("--products", products_dir)->required();
  manifest->add_option("--quality", quality_path, "Newline-delimited ids of views that passed review");
  manifest->add_option("--out", out_path)->required();

  auto* stats = app.add_subcommand("stats", "Histogram of annotations per panorama");
  stats->add_option("--records", records_path)->required();

  auto* sil = app.add_subcommand("sil", "Scale-invariant log error between depth maps");
  sil->add_option("--pred", pred_path, "Predicted depth PFM")->required();
  sil->add_option("--gt", gt_path, "Reference depth PFM")->required();

  return cli::run(app, argc, argv, [&] {
    if (*sil) {
      std::cout << std::setprecision(17) << compute_sil(read_depth(pred_path), read_depth(gt_path)) << '\n';
      return;
    }
    const auto records = records_from_json(read_json(records_path));
    if (*split) {
      spec.kind = kind == "spatial" ? SplitKind::Spatial : SplitKind::Random;
      std::copy(fractions.begin(), fractions.end(), spec.fractions.begin());
      const auto labels = split_records(records, spec);
      Json out = Json::object();
      std::size_t counts[3] = {};
      for (std::size_t i = 0; i < records.size(); ++i) {
        out[records[i].pano_id] = split_name(labels[i]);
        if (labels[i] != SplitLabel::Excluded) ++counts[static_cast<int>(labels[i])];
      }
      write_json_atomic(out_path, out);
      std::cout << "train " << counts[0] << " valid " << counts[1] << " test " << counts[2] << '\n';
      return;
    }
    if (*manifest) {
      const auto doc = read_json(splits_path);
      std::vector<SplitLabel> labels;
      for (const auto& r : records) {
        labels.push_back(doc.contains(r.pano_id) ? parse_label(doc[r.pano_id].get<std::string>())
                                                 : SplitLabel::Excluded);
      }
      std::optional<std::set<std::string>> quality;
      if (!quality_path.empty()) quality = read_quality_list(quality_path);
      const auto m = build_manifest(records, labels, products_dir, quality);
      write_json_atomic(out_path, manifest_to_json(m));
      std::cout << m.entries.size() << " views, " << m.missing.size() << " missing, pass ratio " << m.pass_ratio
                << '\n';
      return;
    }
    std::cout << count_stats_to_json(annotation_count_stats(records)).dump(2) << '\n';
  });
}
