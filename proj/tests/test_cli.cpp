// End-to-end tests of the fusedet executable; they spawn the real binary.

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "test_util.hpp"

namespace fs = std::filesystem;
using testutil::TempDir;

namespace {

const char* cli() { return FUSEDET_CLI_PATH; }

struct RunResult {
    int exit_code;
    std::string out;  // stdout + stderr
};

RunResult run(const std::string& args, const fs::path& workdir) {
    fs::path log = workdir / "cmd.log";
    std::string cmd = "cd '" + workdir.string() + "' && '" + cli() + "' " + args +
                      " > '" + log.string() + "' 2>&1";
    int status = std::system(cmd.c_str());
    int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return RunResult{code, testutil::slurp(log)};
}

bool tree_equal(const fs::path& a, const fs::path& b) {
    std::vector<fs::path> rel_a;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) rel_a.push_back(fs::relative(e.path(), a));
    std::sort(rel_a.begin(), rel_a.end());
    std::vector<fs::path> rel_b;
    for (const auto& e : fs::recursive_directory_iterator(b))
        if (e.is_regular_file()) rel_b.push_back(fs::relative(e.path(), b));
    std::sort(rel_b.begin(), rel_b.end());
    if (rel_a != rel_b) return false;
    for (const auto& rel : rel_a)
        if (!testutil::same_bytes(a / rel, b / rel)) return false;
    return true;
}

}  // namespace

TEST_CASE("help exits 0 for the app and every subcommand") {
    TempDir dir("help");
    CHECK(run("--help", dir.path()).exit_code == 0);
    for (const char* sub : {"simulate", "fuse", "train", "predict", "eval",
                            "compare", "render", "loss-check"}) {
        auto r = run(std::string(sub) + " --help", dir.path());
        CHECK(r.exit_code == 0);
    }
    // defaults show up in help
    auto r = run("fuse --help", dir.path());
    CHECK(r.out.find("--iou-thr") != std::string::npos);
    CHECK(r.out.find("0.55") != std::string::npos);
}

TEST_CASE("argument errors exit 2 and name the flag") {
    TempDir dir("args");
    auto r = run("fuse --in x --out y --iou-thr 1.5", dir.path());
    CHECK(r.exit_code == 2);
    CHECK(r.out.find("--iou-thr") != std::string::npos);
    CHECK(r.out.find("(0,1)") != std::string::npos);

    CHECK(run("fuse --in x --out y --no-such-flag", dir.path()).exit_code == 2);
    CHECK(run("", dir.path()).exit_code == 2);  // subcommand required
    CHECK(run("train --out m.json", dir.path()).exit_code == 1);  // no data source
}

TEST_CASE("simulate is byte-deterministic") {
    TempDir dir("sim_det");
    auto r1 = run("simulate --out c1 --seed 9 --train 6 --test 2", dir.path());
    auto r2 = run("simulate --out c2 --seed 9 --train 6 --test 2", dir.path());
    REQUIRE(r1.exit_code == 0);
    REQUIRE(r2.exit_code == 0);
    CHECK(tree_equal(dir.path() / "c1", dir.path() / "c2"));
    auto r3 = run("simulate --out c3 --seed 10 --train 6 --test 2", dir.path());
    REQUIRE(r3.exit_code == 0);
    CHECK_FALSE(tree_equal(dir.path() / "c1", dir.path() / "c3"));
}

TEST_CASE("full pipeline through the CLI") {
    TempDir dir("pipeline");
    REQUIRE(run("simulate --out corpus --seed 4 --train 10 --test 3", dir.path())
                .exit_code == 0);
    REQUIRE(run("fuse --in corpus/train.annjson --out fused.annjson", dir.path())
                .exit_code == 0);
    REQUIRE(run("train --fused fused.annjson --weighting eq2 --epochs 10 "
                "--out model.json",
                dir.path())
                .exit_code == 0);
    // determinism of train
    REQUIRE(run("train --fused fused.annjson --weighting eq2 --epochs 10 "
                "--out model2.json",
                dir.path())
                .exit_code == 0);
    CHECK(testutil::same_bytes(dir.path() / "model.json", dir.path() / "model2.json"));

    REQUIRE(run("predict --model model.json --data corpus/test.annjson "
                "--out preds.annjson",
                dir.path())
                .exit_code == 0);
    auto r = run("eval --preds preds.annjson --truth corpus/truth.annjson "
                 "--out report.tsv",
                 dir.path());
    REQUIRE(r.exit_code == 0);
    std::string tsv = testutil::slurp(dir.path() / "report.tsv");
    CHECK(tsv.find("method\tseed\tmAP\tAP_class_0\tAP_class_1") != std::string::npos);

    // per-annotator and pooled baselines run too
    CHECK(run("train --dataset corpus/train.annjson --annotator a1 --epochs 2 "
              "--out a1.json",
              dir.path())
              .exit_code == 0);
    CHECK(run("train --dataset corpus/train.annjson --pooled --epochs 2 "
              "--out pooled.json",
              dir.path())
              .exit_code == 0);
    CHECK(run("train --dataset corpus/train.annjson --annotator ghost --epochs 2 "
              "--out g.json",
              dir.path())
              .exit_code == 1);
}

TEST_CASE("eval rejects mismatched class lists") {
    TempDir dir("eval_mismatch");
    testutil::spit(dir.path() / "a.annjson",
                   R"({"classes":["x"],"annotators":["m"],
                       "images":[{"id":"i","width":8,"height":8}],
                       "annotations":[]})");
    testutil::spit(dir.path() / "b.annjson",
                   R"({"classes":["y"],"annotators":["truth"],
                       "images":[{"id":"i","width":8,"height":8}],
                       "annotations":[]})");
    auto r = run("eval --preds a.annjson --truth b.annjson", dir.path());
    CHECK(r.exit_code == 1);
    CHECK(r.out.find("class lists") != std::string::npos);
}

TEST_CASE("vindr-csv input is accepted by fuse") {
    TempDir dir("vindr_cli");
    testutil::spit(dir.path() / "images.csv", "image_id,width,height\nimg,64,64\n");
    testutil::spit(dir.path() / "labels.csv",
                   "image_id,rad_id,class_name,x_min,y_min,x_max,y_max\n"
                   "img,R1,Lesion,4,4,20,20\n"
                   "img,R2,Lesion,6,4,22,20\n"
                   "img,R3,No finding,,,,\n");
    auto r = run("fuse --in labels.csv --format vindr-csv --out fused.annjson",
                 dir.path());
    REQUIRE(r.exit_code == 0);
    std::string fused = testutil::slurp(dir.path() / "fused.annjson");
    CHECK(fused.find("Lesion") != std::string::npos);
    CHECK(fused.find("\"t\": 3") != std::string::npos);
}

TEST_CASE("compare is deterministic and carries the method rows") {
    TempDir dir("compare");
    std::string flags = "compare --seeds 2 --train 8 --test 3 --epochs 4";
    REQUIRE(run(flags + " --out r1.tsv", dir.path()).exit_code == 0);
    REQUIRE(run(flags + " --out r2.tsv", dir.path()).exit_code == 0);
    CHECK(testutil::same_bytes(dir.path() / "r1.tsv", dir.path() / "r2.tsv"));

    std::string tsv = testutil::slurp(dir.path() / "r1.tsv");
    for (const char* method : {"Baseline", "Annotator #1", "Annotator #2",
                               "Annotator #3", "Ensemble", "Ours"})
        CHECK(tsv.find(method) != std::string::npos);
    CHECK(tsv.find("mean") != std::string::npos);
    CHECK(tsv.find("sd") != std::string::npos);
    CHECK(tsv.find("# config") != std::string::npos);
}

TEST_CASE("render produces labeled SVG overlays") {
    TempDir dir("render");
    REQUIRE(run("simulate --out corpus --seed 2 --train 3 --test 1 "
                "--objects-min 1 --objects-max 1",
                dir.path())
                .exit_code == 0);
    REQUIRE(run("fuse --in corpus/train.annjson --out fused.annjson", dir.path())
                .exit_code == 0);
    // find an image id present in the corpus
    std::string train = testutil::slurp(dir.path() / "corpus" / "train.annjson");
    auto pos = train.find("img_");
    REQUIRE(pos != std::string::npos);
    std::string image_id = train.substr(pos, 9);

    auto r = run("render --image corpus/images/" + image_id +
                     ".pgm --boxes corpus/train.annjson --boxes fused.annjson "
                     "--image-id " +
                     image_id + " --out overlay.svg",
                 dir.path());
    REQUIRE(r.exit_code == 0);
    std::string svg = testutil::slurp(dir.path() / "overlay.svg");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("data:image/bmp;base64,") != std::string::npos);
    // three annotator sets plus the fused set -> four legend entries
    std::size_t legends = 0;
    for (std::size_t p = svg.find("class=\"legend\""); p != std::string::npos;
         p = svg.find("class=\"legend\"", p + 1))
        ++legends;
    CHECK(legends == 4);

    SUBCASE("missing file fails cleanly") {
        CHECK(run("render --image nope.pgm --boxes fused.annjson --out o.svg",
                  dir.path())
                  .exit_code == 1);
    }
}

TEST_CASE("render formats confidences with two decimals") {
    TempDir dir("render_conf");
    // one image, 8x8, with a fused box at confidence 2/3
    fusedet::annotations::PixelGrid grid;
    grid.width = grid.height = 8;
    grid.values.assign(64, 50);
    fusedet::annotations::save_pgm(grid, dir.path() / "img.pgm");
    testutil::spit(dir.path() / "fused.annjson", R"({
      "classes": ["c0"],
      "images": [{"id": "img", "width": 8, "height": 8}],
      "annotations": [{"image_id":"img","class":"c0","x_min":1.0,"y_min":1.0,
        "x_max":5.0,"y_max":5.0,"confidence":0.6666666666666666,"support":2,
        "contributors":["a1","a2"]}],
      "config": {"iou_threshold":0.55,"conf_mode":"avg",
                 "rescale_mode":"min_over_t","t_override":null,"t":3}
    })");
    auto r = run("render --image img.pgm --boxes fused.annjson --out o.svg",
                 dir.path());
    REQUIRE(r.exit_code == 0);
    std::string svg = testutil::slurp(dir.path() / "o.svg");
    CHECK(svg.find("c=0.67") != std::string::npos);
}

TEST_CASE("loss-check passes at the default tolerance") {
    TempDir dir("losscheck");
    auto r = run("loss-check --instances 25", dir.path());
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("max relative error") != std::string::npos);
}
