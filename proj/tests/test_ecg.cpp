#include <gtest/gtest.h>

#include <cmath>

#include "ecgr/ecg.hpp"
#include "ecgr/error.hpp"
#include "ecgr/rng.hpp"

using namespace ecgr;

TEST(Leads, CanonicalOrderAndNames) {
  const char* expected[] = {"I", "II", "III", "aVR", "aVL", "aVF",
                            "V1", "V2", "V3", "V4", "V5", "V6"};
  for (std::size_t i = 0; i < kNumLeads; ++i) {
    EXPECT_EQ(lead_name(lead_from_ordinal(i)), expected[i]);
    EXPECT_EQ(ordinal(*lead_from_name(expected[i])), i);
  }
  EXPECT_FALSE(lead_from_name("V7").has_value());
  EXPECT_THROW(lead_from_ordinal(12), Error);
}

TEST(DeriveLeads, ConstantInputs) {
  const std::vector<float> i(8, 1.0f), ii(8, 3.0f);
  const AugmentedLeads d = derive_augmented_leads(i, ii);
  for (std::size_t n = 0; n < 8; ++n) {
    EXPECT_EQ(d.iii[n], 2.0f);
    EXPECT_EQ(d.avr[n], -2.0f);
    EXPECT_EQ(d.avl[n], -0.5f);
    EXPECT_EQ(d.avf[n], 2.5f);
  }
}

TEST(DeriveLeads, ZerosGiveZeros) {
  const std::vector<float> z(5, 0.0f);
  const AugmentedLeads d = derive_augmented_leads(z, z);
  for (const auto* v : {&d.iii, &d.avr, &d.avl, &d.avf}) {
    for (float x : *v) EXPECT_EQ(x, 0.0f);
  }
}

TEST(DeriveLeads, EinthovenOnRandomInput) {
  Rng rng(3);
  std::vector<float> i(16), ii(16);
  for (std::size_t n = 0; n < 16; ++n) {
    i[n] = static_cast<float>(rng.uniform(-2, 2));
    ii[n] = static_cast<float>(rng.uniform(-2, 2));
  }
  const AugmentedLeads d = derive_augmented_leads(i, ii);
  for (std::size_t n = 0; n < 16; ++n) {
    const float lhs = i[n] + d.iii[n];
    EXPECT_LE(std::abs(lhs - ii[n]), 4 * std::numeric_limits<float>::epsilon() * std::abs(ii[n]) + 1e-30f);
    // Goldberger formulas in double as the reference.
    EXPECT_NEAR(d.avr[n], -(double(i[n]) + ii[n]) / 2, 1e-6);
    EXPECT_NEAR(d.avl[n], double(i[n]) - ii[n] / 2.0, 1e-6);
    EXPECT_NEAR(d.avf[n], double(ii[n]) - i[n] / 2.0, 1e-6);
  }
}

TEST(DeriveLeads, LengthMismatchThrows) {
  const std::vector<float> a(4), b(5);
  try {
    derive_augmented_leads(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidInput);
  }
}

TEST(AssembleRecord, ZeroLeads) {
  EightLeads e;
  for (auto* v : {&e.i, &e.ii, &e.v1, &e.v2, &e.v3, &e.v4, &e.v5, &e.v6}) v->assign(10, 0.0f);
  const EcgRecord r = assemble_record(e, 500.0);
  EXPECT_EQ(r.num_leads(), 12u);
  for (float v : r.data()) EXPECT_EQ(v, 0.0f);
}

TEST(AssembleRecord, DerivedRowsAndCanonicalPlacement) {
  EightLeads e;
  e.i.assign(5000, 1.0f);
  e.ii.assign(5000, 3.0f);
  std::vector<float>* pre[] = {&e.v1, &e.v2, &e.v3, &e.v4, &e.v5, &e.v6};
  for (std::size_t k = 0; k < 6; ++k) pre[k]->assign(5000, 10.0f + static_cast<float>(k));
  const EcgRecord r = assemble_record(e, 500.0, "x");
  EXPECT_EQ(r.num_samples(), 5000u);
  EXPECT_EQ(r.sampling_rate(), 500.0);
  EXPECT_EQ(r.at(2, 17), 2.0f);
  EXPECT_EQ(r.at(ordinal(LeadId::V1), 0), 10.0f);
  EXPECT_EQ(r.at(ordinal(LeadId::V6), 4999), 15.0f);
}

TEST(AssembleRecord, RejectsBadInput) {
  EightLeads e;
  for (auto* v : {&e.i, &e.ii, &e.v1, &e.v2, &e.v3, &e.v4, &e.v5, &e.v6}) v->assign(10, 0.0f);
  e.v3.resize(9);
  EXPECT_THROW(assemble_record(e, 500.0), Error);
  e.v3.assign(10, 0.0f);
  e.v3[4] = std::nanf("");
  EXPECT_THROW(assemble_record(e, 500.0), Error);
}

TEST(EcgRecord, ValidateChecksInvariants) {
  EcgRecord r(4, 51.2);
  EXPECT_NO_THROW(r.validate());
  r.set_normalized(true);
  r.at(3, 2) = 1.5f;
  EXPECT_THROW(r.validate(), Error);
  r.at(3, 2) = std::numeric_limits<float>::infinity();
  r.set_normalized(false);
  EXPECT_THROW(r.validate(), Error);
  EXPECT_THROW(EcgRecord(0, 51.2).validate(), Error);
}
