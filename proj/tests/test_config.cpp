#include <gtest/gtest.h>

#include <sstream>

#include "clusterre/config.hpp"

using namespace clusterre;

namespace {

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

std::string error_of(const std::string& text) {
  try {
    validate_config(parse(text));
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, DefaultsAreTheDeskParameters) {
  const RunConfig cfg;
  EXPECT_EQ(cfg.params.alpha, 2.0);
  EXPECT_EQ(cfg.params.beta_rev, 1.0);
  EXPECT_EQ(cfg.params.lambda0, 1.5);
  EXPECT_EQ(cfg.params.rho, 0.5);
  EXPECT_EQ(cfg.params.excitation, (Excitation{ExcitationKind::proportional, 0.5}));
  EXPECT_EQ(cfg.params.claim_dist, MarkDistribution::uniform(0.0, 1.0));
  EXPECT_EQ(cfg.params.horizon, 1.0);
  EXPECT_NO_THROW(validate_config(cfg));
}

TEST(Config, ParsesKeysCommentsAndBlankLines) {
  const auto cfg = parse(
      "# desk run\n"
      "alpha = 3.5\n"
      "\n"
      "claim_dist = truncexp(2, 4)   # bounded claims\n"
      "excitation = constant(0.25)\n"
      "contract = limited_stop_loss\n"
      "coverage = 0.4\n"
      "seed = 99\n"
      "stratified_resampling = true\n"
      "bsde_bins = 4\n");
  EXPECT_EQ(cfg.params.alpha, 3.5);
  EXPECT_EQ(cfg.params.claim_dist, MarkDistribution::exponential(2.0, 4.0));
  EXPECT_EQ(cfg.params.excitation.kind, ExcitationKind::constant);
  EXPECT_EQ(cfg.contract.kind, ContractKind::limited_stop_loss);
  EXPECT_EQ(cfg.contract.coverage, 0.4);
  EXPECT_EQ(cfg.seed, 99u);
  EXPECT_TRUE(cfg.stratified_resampling);
  EXPECT_EQ(cfg.bsde_bins, 4);
}

TEST(Config, ErrorsCarryLineAndField) {
  EXPECT_NE(error_of("alpha = 1\nbogus = 3\n").find("line 2: bogus: unknown key"), std::string::npos);
  EXPECT_NE(error_of("alpha = fast\n").find("line 1: alpha"), std::string::npos);
  EXPECT_NE(error_of("alpha\n").find("line 1: expected 'key = value'"), std::string::npos);
  EXPECT_NE(error_of("stratified_resampling = yes\n").find("stratified_resampling"), std::string::npos);
  EXPECT_NE(error_of("claim_dist = uniform(2, 1)\n").find("claim_dist"), std::string::npos);
}

TEST(Config, RangeViolationsNameTheField) {
  EXPECT_NE(error_of("alpha = 0\n").find("alpha"), std::string::npos);
  EXPECT_NE(error_of("eta = -1\n").find("eta"), std::string::npos);
  EXPECT_NE(error_of("resample_threshold = 1.5\n").find("resample_threshold"), std::string::npos);
  EXPECT_NE(error_of("particles = 0\n").find("particles"), std::string::npos);
  EXPECT_NE(error_of("contract = lsl\n").find("coverage"), std::string::npos);
  EXPECT_NE(error_of("paths = -3\n").find("paths"), std::string::npos);
}

TEST(Config, MissingFileIsReported) {
  EXPECT_THROW(load_config("/nonexistent/clusterre.cfg"), std::runtime_error);
}

TEST(Config, ParamsHashIsStableAndSensitive) {
  const ModelParams p;
  EXPECT_EQ(params_hash(p), params_hash(ModelParams{}));
  EXPECT_EQ(params_hash(p).size(), 16u);
  ModelParams q = p;
  q.rho = 0.5000000000000001;
  EXPECT_NE(params_hash(p), params_hash(q));
  // Round trip through the canonical text.
  std::istringstream in(canonical_params(q));
  EXPECT_EQ(params_hash(parse_config(in).params), params_hash(q));
}
