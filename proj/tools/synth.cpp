// Writes small synthetic corpora for demos and CLI tests.
#include <iostream>

#include "CLI11.hpp"
#include "seqmasks/dataset/synthetic.hpp"
#include "seqmasks/error.hpp"
#include "seqmasks/log.hpp"

using namespace seqmasks;

int main(int argc, char** argv) {
  CLI::App app{"seqmasks_synth: synthetic walking-figure corpora"};
  app.require_subcommand(1);

  SyntheticOptions mars;
  std::string frames, masks, out;
  auto add_mars = [&](CLI::App* cmd) {
    cmd->add_option("--ids", mars.identities, "Identities")->capture_default_str();
    cmd->add_option("--seqs", mars.sequences_per_identity, "Sequences per identity")->capture_default_str();
    cmd->add_option("--test-ids", mars.test_identities, "Identities placed in query/gallery")
        ->capture_default_str();
    cmd->add_option("--min-length", mars.min_length, "Shortest sequence")->capture_default_str();
    cmd->add_option("--max-length", mars.max_length, "Longest sequence")->capture_default_str();
    cmd->add_option("--seed", mars.seed, "Generator seed")->capture_default_str();
    cmd->add_option("--effective", mars.effective_counts, "Effective masks per sequence, comma separated")
        ->delimiter(',');
  };
  auto* raw = app.add_subcommand("raw", "<split>/<id>/<tracklet> frame and mask trees (build-dataset input)");
  raw->add_option("--frames", frames, "Frame root")->required();
  raw->add_option("--masks", masks, "Mask root")->required();
  add_mars(raw);
  auto* normalized = app.add_subcommand("normalized", "Mask-MARS normalized layout with manifest");
  normalized->add_option("--out", out, "Output root")->required();
  add_mars(normalized);

  SyntheticCasiaOptions casia;
  auto* tree = app.add_subcommand("casia", "CASIA-B style silhouette tree");
  tree->add_option("--out", out, "Output root")->required();
  tree->add_option("--first-id", casia.first_id, "First identity number")->capture_default_str();
  tree->add_option("--ids", casia.identities, "Identities")->capture_default_str();
  tree->add_option("--length", casia.length, "Frames per sequence")->capture_default_str();
  tree->add_option("--seed", casia.seed, "Generator seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*raw) {
      write_raw_layout(make_synthetic_corpus(mars), frames, masks);
    } else if (*normalized) {
      write_normalized_layout(make_synthetic_corpus(mars), out);
    } else {
      write_casia_tree(make_synthetic_casia(casia), out);
    }
  } catch (const std::exception& e) {
    log::error() << e.what();
    return 4;
  }
  return 0;
}
