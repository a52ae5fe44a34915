#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

#include "capsroute/dataset.hpp"
#include "capsroute/errors.hpp"
#include "capsroute/synthetic.hpp"
#include "centroid_oracle.hpp"
#include "test_support.hpp"

using namespace capsroute;
using capsroute::testing::TempDir;

namespace fs = std::filesystem;

namespace {

std::size_t count_pngs(const fs::path& root) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(root)) n += e.path().extension() == ".png";
  return n;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Synthetic, Counts) {
  TempDir dir("synth_counts");
  SyntheticOptions opt{2, 10, 7};
  auto m = generate_synthetic(dir.path(), opt);
  EXPECT_EQ(m.entries.size(), 20u);
  EXPECT_EQ(count_pngs(dir.path()), 320u);
  auto loaded = DatasetManifest::load(dir.path() / "manifest.tsv");
  EXPECT_EQ(loaded.labels, (std::vector<std::string>{"class_00", "class_01"}));
  EXPECT_EQ(loaded.entries.size(), 20u);
}

TEST(Synthetic, SameSeedBitIdenticalFiles) {
  TempDir a("synth_a"), b("synth_b");
  SyntheticOptions opt{3, 2, 11};
  generate_synthetic(a.path(), opt);
  generate_synthetic(b.path(), opt);
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(a.path())) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a.path());
    ASSERT_EQ(slurp(e.path()), slurp(b.path() / rel)) << rel;
    ++compared;
  }
  EXPECT_EQ(compared, 3u * 2u * 16u + 1u);

  TempDir c("synth_c");
  opt.seed = 12;
  generate_synthetic(c.path(), opt);
  EXPECT_NE(slurp(a.path() / "class_00/seq_0000/frame_0000.png"),
            slurp(c.path() / "class_00/seq_0000/frame_0000.png"));
}

TEST(Synthetic, NeedsTwoClasses) {
  TempDir dir("synth_one");
  EXPECT_THROW(generate_synthetic(dir.path(), SyntheticOptions{1, 3, 0}), ConfigError);
}

TEST(Synthetic, CentroidOracleSeparatesClasses) {
  for (std::size_t classes : {2u, 4u}) {
    TempDir dir("synth_centroid");
    generate_synthetic(dir.path(), SyntheticOptions{classes, 10, 3});
    auto stream = load_dataset(dir.path() / "manifest.tsv", Split::kAll, false);
    std::size_t correct = 0, total = 0;
    while (auto seq = stream.next()) {
      std::vector<double> px(seq->frames.data().begin(), seq->frames.data().end());
      correct += oracle::centroid_classify(px, 16, 48, classes) == seq->label;
      ++total;
    }
    EXPECT_EQ(total, classes * 10);
    EXPECT_EQ(correct, total) << classes << " classes";
  }
}
